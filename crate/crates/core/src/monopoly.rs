//! Monopoly pricing: optimal single and identical prices, ratio-constrained
//! sweeps, free differentiated prices, the partition comparison, the
//! fixed-top-cutoff improvement probe and the combined viability verdict.

use std::fmt;

use rayon::prelude::*;

use crate::congestion::{
    classify_scaling, global_monotone, monotone_case, GlobalMonotone, MonotoneCase, MonotoneVerdict,
    ScalingClass, ScalingGrid, ScalingTolerance, ScalingVerdict, UsageGrid,
};
use crate::equilibrium::{Equilibrium, MarketScenario, CUTOFF_TIE};
use crate::error::{PmpError, Result};
use crate::search::{golden, grid_then_golden, linspace};

/// Grid size of the price scans.
pub const PRICE_GRID: usize = 512;
/// Golden-section tolerance on prices.
pub const PRICE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    Welfare,
    Profit,
}

impl Objective {
    pub fn evaluate(self, sc: &MarketScenario, eq: &Equilibrium) -> f64 {
        match self {
            Self::Welfare => sc.social_welfare(eq),
            Self::Profit => eq.provider_profit(),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Welfare => "welfare",
            Self::Profit => "profit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub prices: Vec<f64>,
    pub value: f64,
    pub equilibrium: Equilibrium,
    /// Scan points without an equilibrium.
    pub infeasible: usize,
}

fn require_classes(sc: &MarketScenario, want: usize, op: &str) -> Result<()> {
    if sc.class_count() != want {
        return Err(PmpError::Precondition(format!(
            "{op} needs {want} service class(es), got {}",
            sc.class_count()
        )));
    }
    Ok(())
}

/// Maximizes over a scalar price parameter; `prices_of` maps it to the
/// price vector.
fn maximize_along<P>(sc: &MarketScenario, objective: Objective, prices_of: P) -> Result<Optimum>
where
    P: Fn(f64) -> Vec<f64> + Sync,
{
    let f = |x: f64| {
        sc.cutoffs_from_prices(&prices_of(x))
            .ok()
            .map(|eq| objective.evaluate(sc, &eq))
    };
    let best = grid_then_golden(&f, 0.0, sc.value, PRICE_GRID, PRICE_TOL).ok_or_else(|| {
        PmpError::Convergence("no price on the scan admits an equilibrium".into())
    })?;
    let prices = prices_of(best.x);
    let equilibrium = sc.cutoffs_from_prices(&prices)?;
    Ok(Optimum { value: objective.evaluate(sc, &equilibrium), prices, equilibrium, infeasible: best.infeasible })
}

/// Best single price for a one-class market. Plateaus resolve to the
/// largest maximizing price.
pub fn maximize_single_price(sc: &MarketScenario, objective: Objective) -> Result<Optimum> {
    require_classes(sc, 1, "single-price maximization")?;
    maximize_along(sc, objective, |p| vec![p])
}

/// Best common price for all classes.
pub fn maximize_identical_price(sc: &MarketScenario, objective: Objective) -> Result<Optimum> {
    let m = sc.class_count();
    maximize_along(sc, objective, |p| vec![p; m])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub a: f64,
    pub best_value: f64,
    pub argmax_p1: f64,
    pub infeasible: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub objective: Objective,
    /// Ratios with at least one feasible price, in input order.
    pub points: Vec<SweepPoint>,
    /// Ratios where no scanned price admitted an equilibrium.
    pub failures: Vec<(f64, PmpError)>,
    /// Optimum of the unsplit class with capacity `C_1 + C_2`.
    pub baseline_single: f64,
}

impl SweepCurve {
    pub fn max_value(&self) -> Option<f64> {
        self.points.iter().map(|p| p.best_value).reduce(f64::max)
    }
}

/// For each ratio `a`, maximizes the objective over `p_1` with `p_2 = a p_1`.
pub fn ratio_sweep(sc: &MarketScenario, a_grid: &[f64], objective: Objective) -> Result<SweepCurve> {
    require_classes(sc, 2, "ratio sweep")?;
    if let Some(a) = a_grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(PmpError::InvalidInput(format!("price ratio {a} outside [0, 1]")));
    }
    let single = sc.with_capacities(vec![sc.capacities.iter().sum()])?;
    let baseline_single = maximize_single_price(&single, objective)?.value;

    let results: Vec<(f64, Result<Optimum>)> = a_grid
        .par_iter()
        .map(|&a| (a, maximize_along(sc, objective, |p| vec![p, a * p])))
        .collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (a, r) in results {
        match r {
            Ok(opt) => points.push(SweepPoint {
                a,
                best_value: opt.value,
                argmax_p1: opt.prices[0],
                infeasible: opt.infeasible,
            }),
            Err(e) => failures.push((a, e)),
        }
    }
    Ok(SweepCurve { objective, points, failures, baseline_single })
}

const ASCENT_GRID: usize = 33;
const ASCENT_ROUNDS: usize = 100;

/// Maps `u` in `[0, 1]^m` to decreasing cutoffs `theta_1 = u_1 theta_bar`,
/// `theta_{i+1} = u_{i+1} theta_i`.
fn cutoffs_from_unit(u: &[f64], theta_bar: f64) -> Vec<f64> {
    let mut theta = Vec::with_capacity(u.len());
    let mut prev = theta_bar;
    for &x in u {
        prev *= x;
        theta.push(prev);
    }
    theta
}

fn unit_from_cutoffs(theta: &[f64], theta_bar: f64) -> Vec<f64> {
    let mut prev = theta_bar;
    theta
        .iter()
        .map(|&t| {
            let u = if prev > 0.0 { (t / prev).clamp(0.0, 1.0) } else { 0.0 };
            prev = t;
            u
        })
        .collect()
}

/// Coordinate ascent over `u`, each coordinate by grid scan plus golden
/// section.
fn coordinate_ascent<F>(f: &F, start: Vec<f64>, start_value: f64) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let mut u = start;
    let mut best = start_value;
    for _ in 0..ASCENT_ROUNDS {
        let before = best;
        for i in 0..u.len() {
            let along = |x: f64| {
                let mut v = u.clone();
                v[i] = x;
                f(&v)
            };
            let xs = linspace(0.0, 1.0, ASCENT_GRID);
            let vals: Vec<Option<f64>> = xs.iter().map(|&x| along(x)).collect();
            let Some(k) = (0..xs.len())
                .filter(|&k| vals[k].is_some())
                .max_by(|&a, &b| vals[a].unwrap_or(f64::NEG_INFINITY).total_cmp(&vals[b].unwrap_or(f64::NEG_INFINITY)))
            else {
                continue;
            };
            let mut cand = (xs[k], vals[k].unwrap_or(f64::NEG_INFINITY));
            let lo = xs[k.saturating_sub(1)];
            let hi = xs[(k + 1).min(xs.len() - 1)];
            if let Some(g) = golden(&along, lo, hi, 1e-10) {
                if g.1 > cand.1 {
                    cand = g;
                }
            }
            if cand.1 > best {
                u[i] = cand.0;
                best = cand.1;
            }
        }
        if best - before <= 1e-13 * best.abs().max(1.0) {
            break;
        }
    }
    (u, best)
}

/// Free differentiated prices: coordinate ascent in cutoff space from five
/// deterministic starts, one of which is the identical-price optimum.
pub fn maximize_free_prices(sc: &MarketScenario, objective: Objective) -> Result<Optimum> {
    let m = sc.class_count();
    if m < 2 {
        return Err(PmpError::Precondition("free-price maximization needs at least two classes".into()));
    }
    let theta_bar = sc.dist.support_end();
    let value_at = |u: &[f64]| {
        sc.prices_from_cutoffs(&cutoffs_from_unit(u, theta_bar))
            .ok()
            .map(|eq| objective.evaluate(sc, &eq))
    };

    let identical = maximize_identical_price(sc, objective).ok();
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(opt) = &identical {
        starts.push(unit_from_cutoffs(&opt.equilibrium.cutoffs, theta_bar));
    }
    for seed in [0.5, 0.8, 0.3, 0.95, 0.65] {
        if starts.len() == 5 {
            break;
        }
        starts.push(vec![seed; m]);
    }

    let runs: Vec<(Vec<f64>, f64)> = starts
        .into_par_iter()
        .filter_map(|u| {
            let v = value_at(&u)?;
            Some(coordinate_ascent(&value_at, u, v))
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a });

    let from_cutoffs = best.and_then(|(u, _)| sc.prices_from_cutoffs(&cutoffs_from_unit(&u, theta_bar)).ok());
    let candidate = from_cutoffs.map(|eq| Optimum {
        value: objective.evaluate(sc, &eq),
        prices: eq.prices.clone(),
        equilibrium: eq,
        infeasible: 0,
    });
    match (candidate, identical) {
        (Some(c), Some(i)) => Ok(if i.value > c.value { i } else { c }),
        (Some(c), None) => Ok(c),
        (None, Some(i)) => Ok(i),
        (None, None) => Err(PmpError::Convergence("no feasible starting point".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub welfare: f64,
    pub profit: f64,
}

impl Outcome {
    fn of(sc: &MarketScenario, eq: &Equilibrium) -> Self {
        Self { welfare: sc.social_welfare(eq), profit: eq.provider_profit() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionComparison {
    pub price: f64,
    pub single: Outcome,
    pub partitioned: Outcome,
    pub split: Vec<f64>,
}

/// Compares one class of capacity `C` with the same capacity split into
/// classes that all charge `price`.
pub fn partition_comparison(base: &MarketScenario, price: f64, split: &[f64]) -> Result<PartitionComparison> {
    require_classes(base, 1, "partition comparison")?;
    let total = base.capacities[0];
    if split.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(PmpError::InvalidInput(format!("split capacities must be >= 0: {split:?}")));
    }
    let sum: f64 = split.iter().sum();
    if (sum - total).abs() > 1e-9 * total.max(1.0) {
        return Err(PmpError::InvalidInput(format!(
            "split {split:?} sums to {sum}, not the base capacity {total}"
        )));
    }
    let single_eq = base.cutoffs_from_prices(&[price])?;
    let single = Outcome::of(base, &single_eq);

    let active: Vec<f64> = split.iter().copied().filter(|&c| c > 0.0).collect();
    let partitioned = if active.len() <= 1 {
        single
    } else {
        let sc = base.with_capacities(active)?;
        let eq = sc.identical_price_equilibrium(price)?;
        Outcome::of(&sc, &eq)
    };
    Ok(PartitionComparison { price, single, partitioned, split: split.to_vec() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    /// `+1` raises the lower cutoff, `-1` lowers it.
    pub direction: f64,
    /// Step actually used after any halving.
    pub delta: f64,
    pub d_welfare: f64,
    pub d_profit: f64,
    /// Monotone case of the identical-price usage profile.
    pub case: MonotoneCase,
    /// `dS/dtheta_2` and `dpi/dtheta_2` at the identical-price point.
    pub welfare_slope: f64,
    pub profit_slope: f64,
}

/// The identical-price equilibrium a probe starts from, with the top-price
/// slack that keeps a saturated market saturated.
fn probe_base(sc: &MarketScenario, price: f64) -> Result<(Equilibrium, f64)> {
    require_classes(sc, 2, "improvement probe")?;
    let eq = sc.identical_price_equilibrium(price)?;
    if eq.usages.iter().any(|&q| q <= 1e-9) || eq.cutoffs[1] <= CUTOFF_TIE {
        return Err(PmpError::Precondition(format!(
            "identical-price equilibrium at p = {price} has an empty class"
        )));
    }
    let slack = if eq.saturated {
        (sc.value - eq.cutoffs[0] * eq.levels[0] - eq.prices[0]).max(0.0)
    } else {
        0.0
    };
    Ok((eq, slack))
}

fn rebuild(sc: &MarketScenario, theta: &[f64], slack: f64) -> Result<Equilibrium> {
    if slack > 0.0 {
        sc.prices_with_top_slack(theta, slack)
    } else {
        sc.prices_from_cutoffs(theta)
    }
}

/// Effect of moving the lower cutoff of an identical-price equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub d_welfare: f64,
    /// `None` when no ordered price vector supports the moved cutoffs.
    pub d_profit: Option<f64>,
}

/// Welfare and profit change when the lower cutoff of the identical-price
/// equilibrium moves by `step` with the top cutoff (and, in a saturated
/// market, the top-price slack) held fixed. Prices follow from the
/// cutoffs; welfare depends on the cutoffs alone.
pub fn perturb_lower_cutoff(sc: &MarketScenario, price: f64, step: f64) -> Result<Perturbation> {
    let (eq, slack) = probe_base(sc, price)?;
    let theta = eq.cutoffs.clone();
    let moved = [theta[0], theta[1] + step];
    if !(moved[1] > 0.0 && moved[1] < moved[0]) {
        return Err(PmpError::Boundary { boundary: if step > 0.0 { theta[0] } else { 0.0 } });
    }
    let d_welfare = sc.welfare_at_cutoffs(&moved)? - sc.welfare_at_cutoffs(&theta)?;
    let before = rebuild(sc, &theta, slack)?;
    let d_profit = match rebuild(sc, &moved, slack) {
        Ok(after) => Some(after.provider_profit() - before.provider_profit()),
        Err(PmpError::Order(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Perturbation { d_welfare, d_profit })
}

/// Differentiated-pricing improvement from an identical-price equilibrium:
/// move the lower cutoff by `delta` with the top cutoff fixed, in the
/// direction that raises welfare to first order, halving the step down to
/// `1e-6` until both welfare and profit improve.
pub fn local_improvement_probe(sc: &MarketScenario, price: f64, delta: f64) -> Result<ProbeResult> {
    let (eq, _) = probe_base(sc, price)?;
    let case = monotone_case(&sc.model, &sc.capacities, &eq.usages)?;

    let f = sc.dist.density(eq.cutoffs[1]);
    let (t1, t2) = (eq.cutoffs[0], eq.cutoffs[1]);
    let k1 = sc.model.marginal(eq.usages[0], sc.capacities[0])?;
    let k2 = sc.model.marginal(eq.usages[1], sc.capacities[1])?;
    let upper_mass = sc.dist.weighted_mass_unchecked(t2, t1);
    let lower_mass = sc.dist.weighted_mass_unchecked(0.0, t2);
    let welfare_slope = f * (k1 * upper_mass - k2 * lower_mass + t2 * (eq.levels[0] - eq.levels[1]));
    let joined = eq.usages[0] + eq.usages[1];
    let profit_slope = f * (joined * t1 * k1 - eq.usages[1] * t2 * (k1 + k2));

    let direction = if welfare_slope >= 0.0 { 1.0 } else { -1.0 };
    if delta == 0.0 {
        return Ok(ProbeResult { direction, delta, d_welfare: 0.0, d_profit: 0.0, case, welfare_slope, profit_slope });
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(PmpError::InvalidInput(format!("probe step must be >= 0, got {delta}")));
    }
    let mut step = delta;
    let mut last = None;
    while step >= 1e-6 {
        match perturb_lower_cutoff(sc, price, direction * step) {
            Ok(Perturbation { d_welfare, d_profit: Some(d_profit) }) => {
                if d_welfare > 0.0 && d_profit > 0.0 {
                    return Ok(ProbeResult {
                        direction,
                        delta: step,
                        d_welfare,
                        d_profit,
                        case,
                        welfare_slope,
                        profit_slope,
                    });
                }
                last = Some((d_welfare, d_profit));
            }
            Ok(_) => {}
            Err(PmpError::Boundary { .. }) => {}
            Err(e) => return Err(e),
        }
        step *= 0.5;
    }
    Err(PmpError::Convergence(format!(
        "no step down to 1e-6 improves both objectives (last changes {last:?})"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Viability {
    Viable,
    Nonviable,
    Indeterminate,
}

impl fmt::Display for Viability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Viable => "PMP-viable",
            Self::Nonviable => "PMP-nonviable",
            Self::Indeterminate => "Indeterminate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport {
    pub split: Vec<f64>,
    /// Usage profiles at identical-price equilibria across the price grid.
    pub equilibrium_monotone: Option<GlobalMonotone>,
    pub comparisons: Vec<PartitionComparison>,
    pub profit_sweep: Option<SweepCurve>,
    pub welfare_sweep: Option<SweepCurve>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViabilityReport {
    pub scaling: ScalingClass,
    /// Unrestricted grid sampler, on the first split.
    pub monotone: Option<GlobalMonotone>,
    pub splits: Vec<SplitReport>,
    pub verdict: Viability,
    pub errors: Vec<String>,
}

/// Number of prices in the comparison grid.
pub const COMPARISON_GRID: usize = 64;

/// Combines the two sufficient conditions for differentiated pricing to pay
/// off: a partition-preferred (or indifferent) congestion function, and a
/// consistent monotone preference at the equilibria PMP actually reaches.
/// A multiplexing-preferred function whose monotone preference is violated
/// fails both and is reported nonviable.
pub fn viability_report(base: &MarketScenario, splits: &[Vec<f64>], a_grid: &[f64]) -> Result<ViabilityReport> {
    require_classes(base, 1, "viability report")?;
    let mut errors = Vec::new();
    let scaling = classify_scaling(&base.model, &ScalingGrid::standard(), ScalingTolerance::default())?;
    let prices = linspace(0.0, base.value, COMPARISON_GRID);

    let mut reports = Vec::new();
    for split in splits {
        let comparisons: Vec<PartitionComparison> = prices
            .iter()
            .filter_map(|&p| match partition_comparison(base, p, split) {
                Ok(c) => Some(c),
                Err(e) => {
                    errors.push(format!("split {split:?}, p = {p}: {e}"));
                    None
                }
            })
            .collect();
        let active: Vec<f64> = split.iter().copied().filter(|&c| c > 0.0).collect();
        let (mut equilibrium_monotone, mut profit_sweep, mut welfare_sweep) = (None, None, None);
        if active.len() >= 2 {
            let sc = base.with_capacities(active.clone())?;
            let profiles: Vec<Vec<f64>> = prices
                .iter()
                .filter_map(|&p| sc.identical_price_equilibrium(p).ok())
                .map(|eq| eq.usages)
                .filter(|q| q.iter().zip(&active).all(|(&q, &c)| sc.model.marginal(q, c).is_ok()))
                .collect();
            match global_monotone(&sc.model, &active, profiles) {
                Ok(g) => equilibrium_monotone = Some(g),
                Err(e) => errors.push(format!("split {split:?} monotone check: {e}")),
            }
            if active.len() == 2 && !a_grid.is_empty() {
                for objective in [Objective::Profit, Objective::Welfare] {
                    match ratio_sweep(&sc, a_grid, objective) {
                        Ok(curve) => match objective {
                            Objective::Profit => profit_sweep = Some(curve),
                            Objective::Welfare => welfare_sweep = Some(curve),
                        },
                        Err(e) => errors.push(format!("split {split:?} {objective} sweep: {e}")),
                    }
                }
            }
        }
        reports.push(SplitReport { split: split.clone(), equilibrium_monotone, comparisons, profit_sweep, welfare_sweep });
    }

    let monotone = splits
        .iter()
        .map(|s| s.iter().copied().filter(|&c| c > 0.0).collect::<Vec<_>>())
        .find(|s| s.len() >= 2)
        .and_then(|caps| {
            let profiles = UsageGrid::default().profiles(&base.model, &caps);
            match global_monotone(&base.model, &caps, profiles) {
                Ok(g) => Some(g),
                Err(e) => {
                    errors.push(format!("monotone check: {e}"));
                    None
                }
            }
        });

    let partition_ok = matches!(scaling.verdict, ScalingVerdict::PartitionPreferred | ScalingVerdict::Indifferent);
    let monotone_ok = !reports.is_empty()
        && reports.iter().all(|r| {
            r.equilibrium_monotone.as_ref().is_some_and(|g| {
                matches!(g.verdict, MonotoneVerdict::ConsistentM1 | MonotoneVerdict::ConsistentM2)
            })
        });
    let verdict = if partition_ok && monotone_ok {
        Viability::Viable
    } else if scaling.verdict == ScalingVerdict::MultiplexingPreferred
        && monotone.as_ref().is_some_and(|g| g.verdict == MonotoneVerdict::Violated)
    {
        Viability::Nonviable
    } else {
        Viability::Indeterminate
    };
    Ok(ViabilityReport { scaling, monotone, splits: reports, verdict, errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::congestion::CongestionModel;
    use crate::population::TypeDistribution;

    fn market(model: CongestionModel, caps: &[f64]) -> MarketScenario {
        MarketScenario::new(2.0, caps.to_vec(), model, TypeDistribution::default()).unwrap()
    }

    #[test]
    fn unit_map_roundtrip() {
        let theta = [0.9, 0.5, 0.2];
        let u = unit_from_cutoffs(&theta, 1.0);
        let back = cutoffs_from_unit(&u, 1.0);
        for (a, b) in theta.iter().zip(back) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn utilization_single_price_optima() {
        let sc = market(CongestionModel::Utilization, &[1.0]);
        let profit = maximize_single_price(&sc, Objective::Profit).unwrap();
        assert!((profit.value - 4.0 * 6f64.sqrt() / 9.0).abs() < 1e-9);
        assert!((profit.prices[0] - 4.0 / 3.0).abs() < 1e-6);
        let welfare = maximize_single_price(&sc, Objective::Welfare).unwrap();
        assert!((welfare.value - 1.5).abs() < 1e-12);
        assert!((welfare.prices[0] - 1.0).abs() < 1e-6, "{}", welfare.prices[0]);
    }

    #[test]
    fn single_price_requires_one_class() {
        let sc = market(CongestionModel::Utilization, &[0.5, 0.5]);
        assert!(matches!(maximize_single_price(&sc, Objective::Profit), Err(PmpError::Precondition(_))));
    }

    #[test]
    fn latency_partition_closed_forms() {
        let base = market(CongestionModel::Latency, &[1.0]);
        let c = partition_comparison(&base, 1.0, &[0.5, 0.5]).unwrap();
        assert!((c.single.welfare - 0.75).abs() < 1e-9 && (c.single.profit - 0.5).abs() < 1e-9);
        assert!((c.partitioned.welfare - 0.5).abs() < 1e-9);
        assert!((c.partitioned.profit - 1.0 / 3.0).abs() < 1e-9);
        let degenerate = partition_comparison(&base, 1.0, &[1.0, 0.0]).unwrap();
        assert_eq!(degenerate.single, degenerate.partitioned);
        assert!(partition_comparison(&base, 1.0, &[0.5, 0.4]).is_err());
    }

    #[test]
    fn probe_null_and_reverse_steps() {
        let sc = market(CongestionModel::Utilization, &[0.3, 0.7]);
        let probe = local_improvement_probe(&sc, 0.9, 0.0).unwrap();
        assert_eq!((probe.d_welfare, probe.d_profit), (0.0, 0.0));
        let probe = local_improvement_probe(&sc, 0.9, 1e-3).unwrap();
        assert!(probe.d_welfare > 0.0 && probe.d_profit > 0.0);
        let reverse = perturb_lower_cutoff(&sc, 0.9, -probe.direction * 1e-3).unwrap();
        assert!(reverse.d_welfare < 0.0);
    }

    #[test]
    fn probe_rejects_empty_market() {
        let sc = market(CongestionModel::Utilization, &[0.3, 0.7]);
        assert!(matches!(local_improvement_probe(&sc, 2.0, 1e-3), Err(PmpError::Precondition(_))));
    }
}
