//! Deterministic one-dimensional maximization: grid scan plus golden-section
//! refinement. Objectives may be undefined at some points (`None`).

use rayon::prelude::*;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Relative tolerance under which two objective values count as a tie.
pub(crate) const PLATEAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Maximum {
    pub x: f64,
    pub value: f64,
    /// Grid points where the objective was undefined.
    pub infeasible: usize,
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

fn ties(a: f64, best: f64) -> bool {
    a >= best - PLATEAU * best.abs().max(1.0)
}

/// Golden-section search for a maximum on `[a, b]`; on ties the bracket
/// moves right, so plateaus resolve to their right edge.
pub(crate) fn golden<F>(f: &F, mut a: f64, mut b: f64, tol: f64) -> Option<(f64, f64)>
where
    F: Fn(f64) -> Option<f64>,
{
    let eval = |x: f64| f(x).unwrap_or(f64::NEG_INFINITY);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d);
        }
    }
    // report the best of the points actually evaluated near the end
    let candidates = [(d, fd), (c, fc), (b, eval(b)), (a, eval(a))];
    let mut best: Option<(f64, f64)> = None;
    for (x, v) in candidates {
        if !v.is_finite() {
            continue;
        }
        best = match best {
            None => Some((x, v)),
            Some((bx, bv)) => {
                if v > bv || (v == bv && x > bx) {
                    Some((x, v))
                } else {
                    Some((bx, bv))
                }
            }
        };
    }
    best
}

/// Scans `n` evenly spaced points on `[lo, hi]`, then refines around the
/// best one. Among near-equal maxima the largest `x` wins.
pub(crate) fn grid_then_golden<F>(f: &F, lo: f64, hi: f64, n: usize, tol: f64) -> Option<Maximum>
where
    F: Fn(f64) -> Option<f64> + Sync,
{
    let xs = linspace(lo, hi, n.max(2));
    let values: Vec<Option<f64>> = xs.par_iter().map(|&x| f(x).filter(|v| v.is_finite())).collect();
    let infeasible = values.iter().filter(|v| v.is_none()).count();

    let best = values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return None;
    }
    let k = (0..xs.len()).rev().find(|&i| values[i].is_some_and(|v| ties(v, best)))?;
    let (mut x, mut value) = (xs[k], values[k].unwrap_or(best));

    let left = xs[k.saturating_sub(1)];
    let right = xs[(k + 1).min(xs.len() - 1)];
    if let Some((gx, gv)) = golden(f, left, right, tol) {
        if gv > value || (ties(gv, value) && gx > x) {
            x = gx;
            value = gv;
        }
    }
    Some(Maximum { x, value, infeasible })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_smooth_maximum() {
        let f = |x: f64| Some(-(x - 0.3) * (x - 0.3));
        let m = grid_then_golden(&f, 0.0, 1.0, 64, 1e-9).unwrap();
        assert!((m.x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn plateau_resolves_to_right_edge() {
        let f = |x: f64| Some(if x <= 0.55 { 1.0 } else { 1.0 - (x - 0.55) });
        let m = grid_then_golden(&f, 0.0, 1.0, 32, 1e-9).unwrap();
        assert!((m.x - 0.55).abs() < 1e-8, "{}", m.x);
        assert_eq!(m.value, 1.0);
    }

    #[test]
    fn skips_undefined_points() {
        let f = |x: f64| if x < 0.5 { None } else { Some(-x) };
        let m = grid_then_golden(&f, 0.0, 1.0, 11, 1e-9).unwrap();
        assert_eq!(m.infeasible, 5);
        assert!((m.x - 0.5).abs() < 1e-8);
        assert!(grid_then_golden(&|_| None, 0.0, 1.0, 11, 1e-9).is_none());
    }
}
