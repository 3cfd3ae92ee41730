//! Two competing providers. Provider I sells one class at a fixed capacity;
//! provider II sells one class, or splits its capacity into two classes.
//! Users face the merged list of classes, so the market equilibrium is the
//! multi-class equilibrium of that list, with usage attributed back to the
//! owning provider.

use std::fmt;

use rayon::prelude::*;

use crate::congestion::CongestionModel;
use crate::equilibrium::{Equilibrium, MarketScenario};
use crate::error::{PmpError, Result};
use crate::population::TypeDistribution;
use crate::search::{golden, grid_then_golden, linspace};

/// Golden-section tolerance on duopoly prices.
pub const DUOPOLY_PRICE_TOL: f64 = 1e-9;
const CASE_GRID: usize = 129;
const ASCENT_GRID: usize = 33;
const ASCENT_ROUNDS: usize = 40;
/// Best-response iteration stops once no strategy coordinate moves more
/// than this.
pub const NASH_STEP: f64 = 1e-6;
pub const NASH_ROUNDS: usize = 100;
/// A state this close to an earlier (non-adjacent) one counts as a cycle.
const CYCLE_TOL: f64 = 1e-8;
/// Offsets of the local-maximum check around a candidate equilibrium.
pub const VERIFY_OFFSETS: [f64; 5] = [-1e-3, -5e-4, 0.0, 5e-4, 1e-3];
/// Largest unilateral gain tolerated by the local-maximum check.
pub const VERIFY_GAIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provider {
    I,
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResponseMode {
    OneClass,
    TwoClass,
}

impl fmt::Display for ResponseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::OneClass => "one-class",
            Self::TwoClass => "two-class",
        })
    }
}

/// Classes a provider offers, as `(price, capacity)` pairs with
/// nonincreasing prices.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderStrategy {
    pub classes: Vec<(f64, f64)>,
}

impl ProviderStrategy {
    pub fn one_class(price: f64, capacity: f64) -> Self {
        Self { classes: vec![(price, capacity)] }
    }

    pub fn two_class(p1: f64, c1: f64, p2: f64, c2: f64) -> Self {
        Self { classes: vec![(p1, c1), (p2, c2)] }
    }

    fn coordinates(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.classes.iter().map(|c| c.0).collect();
        v.extend(self.classes.iter().map(|c| c.1));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DuopolyScenario {
    pub value: f64,
    pub model: CongestionModel,
    pub dist: TypeDistribution,
    pub capacity_i: f64,
    pub capacity_ii: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Owner {
    pub provider: Provider,
    /// Index within the provider's strategy.
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketEquilibrium {
    /// Merged market: positive-capacity classes sorted by price.
    pub market: MarketScenario,
    pub equilibrium: Equilibrium,
    pub owners: Vec<Owner>,
    pub usage_i: f64,
    pub usage_ii: f64,
    pub profit_i: f64,
    pub profit_ii: f64,
}

impl MarketEquilibrium {
    /// Position of provider I's (first) class in the merged market.
    pub fn index_of_i(&self) -> Option<usize> {
        self.owners.iter().position(|o| o.provider == Provider::I)
    }
}

impl DuopolyScenario {
    pub fn new(
        value: f64,
        model: CongestionModel,
        dist: TypeDistribution,
        capacity_i: f64,
        capacity_ii: f64,
    ) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(PmpError::InvalidInput(format!("V must be positive, got {value}")));
        }
        if !(capacity_i.is_finite() && capacity_i > 0.0) {
            return Err(PmpError::InvalidInput(format!("provider I capacity must be positive, got {capacity_i}")));
        }
        if !(capacity_ii.is_finite() && capacity_ii >= 0.0) {
            return Err(PmpError::InvalidInput(format!("provider II capacity must be >= 0, got {capacity_ii}")));
        }
        Ok(Self { value, model, dist, capacity_i, capacity_ii })
    }

    fn check_strategy(&self, s: &ProviderStrategy, capacity: f64, who: &str) -> Result<()> {
        if s.classes.is_empty() || s.classes.len() > 2 {
            return Err(PmpError::InvalidInput(format!("{who} must offer one or two classes")));
        }
        for &(p, c) in &s.classes {
            if !(p.is_finite() && (0.0..=self.value).contains(&p)) {
                return Err(PmpError::InvalidInput(format!("{who} price {p} outside [0, V]")));
            }
            if !(c.is_finite() && c >= 0.0) {
                return Err(PmpError::InvalidInput(format!("{who} capacity {c} must be >= 0")));
            }
        }
        if s.classes.windows(2).any(|w| w[1].0 > w[0].0) {
            return Err(PmpError::InvalidInput(format!("{who} class prices must be nonincreasing")));
        }
        let total: f64 = s.classes.iter().map(|c| c.1).sum();
        if (total - capacity).abs() > 1e-9 * capacity.max(1.0) {
            return Err(PmpError::InvalidInput(format!(
                "{who} class capacities sum to {total}, not {capacity}"
            )));
        }
        Ok(())
    }

    /// Equilibrium of the merged market. Equal prices across providers are
    /// kept as distinct classes at a common congestion level.
    pub fn market_equilibrium(&self, s_i: &ProviderStrategy, s_ii: &ProviderStrategy) -> Result<MarketEquilibrium> {
        self.check_strategy(s_i, self.capacity_i, "provider I")?;
        self.check_strategy(s_ii, self.capacity_ii, "provider II")?;

        let mut classes: Vec<(f64, f64, Owner)> = Vec::new();
        for (provider, s) in [(Provider::I, s_i), (Provider::II, s_ii)] {
            for (class, &(p, c)) in s.classes.iter().enumerate() {
                if c > 0.0 {
                    classes.push((p, c, Owner { provider, class }));
                }
            }
        }
        // stable: provider I precedes II at equal prices
        classes.sort_by(|a, b| b.0.total_cmp(&a.0));

        let market = MarketScenario::new(
            self.value,
            classes.iter().map(|c| c.1).collect(),
            self.model,
            self.dist.clone(),
        )?;
        let prices: Vec<f64> = classes.iter().map(|c| c.0).collect();
        let equilibrium = market.cutoffs_from_prices(&prices)?;
        let owners: Vec<Owner> = classes.iter().map(|c| c.2).collect();

        let (mut usage_i, mut usage_ii, mut profit_i, mut profit_ii) = (0.0, 0.0, 0.0, 0.0);
        for (k, owner) in owners.iter().enumerate() {
            let q = equilibrium.usages[k];
            let r = equilibrium.prices[k] * q;
            match owner.provider {
                Provider::I => {
                    usage_i += q;
                    profit_i += r;
                }
                Provider::II => {
                    usage_ii += q;
                    profit_ii += r;
                }
            }
        }
        Ok(MarketEquilibrium { market, equilibrium, owners, usage_i, usage_ii, profit_i, profit_ii })
    }

    pub fn profit_i(&self, p_i: f64, s_ii: &ProviderStrategy) -> Result<f64> {
        Ok(self
            .market_equilibrium(&ProviderStrategy::one_class(p_i, self.capacity_i), s_ii)?
            .profit_i)
    }

    pub fn profit_ii(&self, p_i: f64, s_ii: &ProviderStrategy) -> Result<f64> {
        Ok(self
            .market_equilibrium(&ProviderStrategy::one_class(p_i, self.capacity_i), s_ii)?
            .profit_ii)
    }

    /// Prices of provider II's positive-capacity classes.
    fn rival_prices(&self, s_ii: &ProviderStrategy) -> Vec<f64> {
        s_ii.classes.iter().filter(|c| c.1 > 0.0).map(|c| c.0).collect()
    }

    /// `dpi^I/dp^I` by central differences, with the implicit-function
    /// derivative and the matching closed form as cross-checks.
    pub fn profit_derivative_i(&self, p_i: f64, s_ii: &ProviderStrategy, step: Option<f64>) -> Result<DerivativeReport> {
        let h = step.unwrap_or(1e-5 * self.value);
        if !(h > 0.0) {
            return Err(PmpError::InvalidInput(format!("difference step must be positive, got {h}")));
        }
        if p_i - h < 0.0 {
            return Err(PmpError::Boundary { boundary: 0.0 });
        }
        if p_i + h > self.value {
            return Err(PmpError::Boundary { boundary: self.value });
        }
        if let Some(&b) = self.rival_prices(s_ii).iter().find(|&&q| q > p_i - h && q < p_i + h) {
            return Err(PmpError::Boundary { boundary: b });
        }
        let finite_difference = (self.profit_i(p_i + h, s_ii)? - self.profit_i(p_i - h, s_ii)?) / (2.0 * h);
        let me = self.market_equilibrium(&ProviderStrategy::one_class(p_i, self.capacity_i), s_ii)?;
        let implicit = me.index_of_i().and_then(|c| implicit_profit_slope(&me.market, &me.equilibrium, c));
        let closed_form = closed_form_check(&me, p_i);
        Ok(DerivativeReport { finite_difference, implicit, closed_form })
    }

    /// Provider I's profit-maximizing price against a fixed rival, scanning
    /// each price region delimited by the rival's prices separately.
    pub fn best_response_i(&self, s_ii: &ProviderStrategy) -> Result<(f64, f64)> {
        let mut cuts = vec![0.0, self.value];
        cuts.extend(self.rival_prices(s_ii).into_iter().filter(|&p| p > 0.0 && p < self.value));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let f = |p: f64| self.profit_i(p, s_ii).ok();
        let mut best: Option<(f64, f64)> = None;
        for w in cuts.windows(2) {
            if let Some(m) = grid_then_golden(&f, w[0], w[1], CASE_GRID, DUOPOLY_PRICE_TOL) {
                if best.is_none_or(|b| m.value > b.1 || (m.value == b.1 && m.x > b.0)) {
                    best = Some((m.x, m.value));
                }
            }
        }
        best.ok_or_else(|| PmpError::Convergence("no provider I price admits an equilibrium".into()))
    }

    /// Provider II's best one-class or two-class strategy against `p_i`.
    pub fn best_response_ii(&self, p_i: f64, mode: ResponseMode) -> Result<(ProviderStrategy, f64)> {
        let one = self.best_one_class_ii(p_i)?;
        match mode {
            ResponseMode::OneClass => Ok(one),
            ResponseMode::TwoClass => self.best_two_class_ii(p_i, &one),
        }
    }

    fn best_one_class_ii(&self, p_i: f64) -> Result<(ProviderStrategy, f64)> {
        let c = self.capacity_ii;
        let f = |p: f64| self.profit_ii(p_i, &ProviderStrategy::one_class(p, c)).ok();
        let mut best: Option<(f64, f64)> = None;
        let mut cuts = vec![0.0, self.value];
        if p_i > 0.0 && p_i < self.value {
            cuts.insert(1, p_i);
        }
        for w in cuts.windows(2) {
            if let Some(m) = grid_then_golden(&f, w[0], w[1], CASE_GRID, DUOPOLY_PRICE_TOL) {
                if best.is_none_or(|b| m.value > b.1 || (m.value == b.1 && m.x > b.0)) {
                    best = Some((m.x, m.value));
                }
            }
        }
        let (p, v) = best.ok_or_else(|| PmpError::Convergence("provider II has no feasible price".into()))?;
        Ok((ProviderStrategy::one_class(p, c), v))
    }

    fn best_two_class_ii(&self, p_i: f64, one: &(ProviderStrategy, f64)) -> Result<(ProviderStrategy, f64)> {
        let c = self.capacity_ii;
        let v = self.value;
        let p_star = one.0.classes[0].0;
        let value_of = |x: &[f64; 3]| {
            let (p1, p2, c1) = (x[0], x[1], x[2]);
            if !(p2 <= p1 && (0.0..=v).contains(&p2) && p1 <= v && (0.0..=c).contains(&c1)) {
                return None;
            }
            self.profit_ii(p_i, &ProviderStrategy::two_class(p1, c1, p2, c - c1)).ok()
        };
        let starts = [
            [p_star, p_star, 0.0],
            [p_star, p_star, 0.5 * c],
            [0.8 * v, 0.5 * v, 0.5 * c],
            [0.6 * v, 0.3 * v, 0.3 * c],
            [0.9 * v, 0.6 * v, 0.7 * c],
        ];
        let runs: Vec<([f64; 3], f64)> = starts
            .par_iter()
            .filter_map(|s| {
                let start_value = value_of(s)?;
                Some(self.ascend_two_class(&value_of, *s, start_value, p_i))
            })
            .collect();
        let mut best = ([p_star, p_star, 0.0], one.1);
        for (x, val) in runs {
            if val > best.1 {
                best = (x, val);
            }
        }
        let [p1, p2, c1] = best.0;
        Ok((ProviderStrategy::two_class(p1, c1, p2, c - c1), best.1))
    }

    /// Coordinate ascent over `(p_1, p_2, C_1)`; price coordinates keep
    /// provider I's price on their scan grid so the ordering kink is seen.
    fn ascend_two_class<F>(&self, f: &F, mut x: [f64; 3], mut best: f64, p_i: f64) -> ([f64; 3], f64)
    where
        F: Fn(&[f64; 3]) -> Option<f64>,
    {
        for _ in 0..ASCENT_ROUNDS {
            let before = best;
            for i in 0..3 {
                let (lo, hi) = match i {
                    0 => (x[1], self.value),
                    1 => (0.0, x[0]),
                    _ => (0.0, self.capacity_ii),
                };
                if hi <= lo {
                    continue;
                }
                let along = |t: f64| {
                    let mut y = x;
                    y[i] = t;
                    f(&y)
                };
                let mut xs = linspace(lo, hi, ASCENT_GRID);
                if i < 2 && p_i > lo && p_i < hi {
                    xs.push(p_i);
                    xs.sort_by(f64::total_cmp);
                }
                let vals: Vec<f64> = xs.iter().map(|&t| along(t).unwrap_or(f64::NEG_INFINITY)).collect();
                let k = (0..xs.len()).fold(0, |b, k| if vals[k] > vals[b] { k } else { b });
                if !vals[k].is_finite() {
                    continue;
                }
                let mut cand = (xs[k], vals[k]);
                if let Some(g) = golden(&along, xs[k.saturating_sub(1)], xs[(k + 1).min(xs.len() - 1)], DUOPOLY_PRICE_TOL) {
                    if g.1 > cand.1 {
                        cand = g;
                    }
                }
                if cand.1 > best {
                    x[i] = cand.0;
                    best = cand.1;
                }
            }
            if best - before <= 1e-12 * best.abs().max(1.0) {
                break;
            }
        }
        (x, best)
    }

    /// Alternating best responses from `p^I = V/2` against a rival at
    /// `V/2`, followed by a neighbourhood check that neither provider gains
    /// from a small unilateral move.
    pub fn find_nash(&self, mode: ResponseMode) -> Result<NashOutcome> {
        let half = 0.5 * self.value;
        let mut p_i = half;
        let mut s_ii = match mode {
            ResponseMode::OneClass => ProviderStrategy::one_class(half, self.capacity_ii),
            ResponseMode::TwoClass => {
                ProviderStrategy::two_class(half, 0.5 * self.capacity_ii, half, 0.5 * self.capacity_ii)
            }
        };
        let state = |p: f64, s: &ProviderStrategy| {
            let mut v = vec![p];
            v.extend(s.coordinates());
            v
        };
        let mut trajectory = vec![state(p_i, &s_ii)];
        for round in 1..=NASH_ROUNDS {
            let (next_p, _) = self.best_response_i(&s_ii)?;
            let (next_s, _) = self.best_response_ii(next_p, mode)?;
            let next = state(next_p, &next_s);
            let prev = trajectory.last().cloned().unwrap_or_default();
            let change = next
                .iter()
                .zip(&prev)
                .map(|(a, b)| (a - b).abs())
                .fold(if next.len() == prev.len() { 0.0 } else { f64::INFINITY }, f64::max);
            let cycled = trajectory[..trajectory.len() - 1]
                .iter()
                .any(|old| old.len() == next.len() && old.iter().zip(&next).all(|(a, b)| (a - b).abs() <= CYCLE_TOL));
            trajectory.push(next);
            p_i = next_p;
            s_ii = next_s;
            if change < NASH_STEP {
                let me = self.market_equilibrium(&ProviderStrategy::one_class(p_i, self.capacity_i), &s_ii)?;
                let verified = self.is_local_maximum(p_i, &s_ii, me.profit_i, me.profit_ii);
                return Ok(NashOutcome {
                    price_i: p_i,
                    strategy_ii: s_ii,
                    profit_i: me.profit_i,
                    profit_ii: me.profit_ii,
                    rounds: round,
                    verified,
                    trajectory,
                });
            }
            if cycled {
                return Err(PmpError::NoConvergence { rounds: round, trajectory });
            }
        }
        Err(PmpError::NoConvergence { rounds: NASH_ROUNDS, trajectory })
    }

    /// No unilateral move on the offset grid raises either profit by more
    /// than [`VERIFY_GAIN`].
    pub fn is_local_maximum(&self, p_i: f64, s_ii: &ProviderStrategy, profit_i: f64, profit_ii: f64) -> bool {
        let i_ok = VERIFY_OFFSETS.iter().all(|&d| {
            let p = p_i + d;
            if !(0.0..=self.value).contains(&p) {
                return true;
            }
            self.profit_i(p, s_ii).map_or(true, |v| v <= profit_i + VERIFY_GAIN)
        });
        if !i_ok {
            return false;
        }
        let base = s_ii.coordinates();
        let n = s_ii.classes.len();
        // prices of every class, then the first class's capacity (the last
        // capacity is implied)
        let dims = if n == 1 { 1 } else { n + 1 };
        let total = VERIFY_OFFSETS.len().pow(dims as u32);
        (0..total).all(|mut code| {
            let mut classes = s_ii.classes.clone();
            for d in 0..dims {
                let off = VERIFY_OFFSETS[code % VERIFY_OFFSETS.len()];
                code /= VERIFY_OFFSETS.len();
                if d < n {
                    classes[d].0 = base[d] + off;
                } else {
                    classes[0].1 = base[n] + off;
                    classes[1].1 = self.capacity_ii - classes[0].1;
                }
            }
            let s = ProviderStrategy { classes };
            match self.profit_ii(p_i, &s) {
                Ok(v) => v <= profit_ii + VERIFY_GAIN,
                // moves that leave the strategy space or the equilibrium
                // domain are not deviations
                Err(_) => true,
            }
        })
    }

    /// Provider profits at each `p^I` when provider II best-responds.
    /// Provider I's profit is reported against the two-class response when
    /// that mode is requested, otherwise against the one-class response.
    pub fn duopoly_curve(&self, grid: &[f64], modes: &[ResponseMode]) -> Vec<CurveRow> {
        grid.par_iter()
            .map(|&p_i| {
                let mut row = CurveRow { p_i, profit_i: None, profit_ii_one: None, profit_ii_two: None, errors: Vec::new() };
                for &mode in modes {
                    match self.best_response_ii(p_i, mode) {
                        Ok((s, v)) => {
                            let pi_i = self.profit_i(p_i, &s);
                            match mode {
                                ResponseMode::OneClass => row.profit_ii_one = Some(v),
                                ResponseMode::TwoClass => row.profit_ii_two = Some(v),
                            }
                            match pi_i {
                                Ok(x) if mode == ResponseMode::TwoClass || row.profit_i.is_none() => row.profit_i = Some(x),
                                Ok(_) => {}
                                Err(e) => row.errors.push(format!("{mode}: {e}")),
                            }
                        }
                        Err(e) => row.errors.push(format!("{mode}: {e}")),
                    }
                }
                row
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub p_i: f64,
    pub profit_i: Option<f64>,
    pub profit_ii_one: Option<f64>,
    pub profit_ii_two: Option<f64>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashOutcome {
    pub price_i: f64,
    pub strategy_ii: ProviderStrategy,
    pub profit_i: f64,
    pub profit_ii: f64,
    pub rounds: usize,
    /// Passed the neighbourhood local-maximum check.
    pub verified: bool,
    /// `[p^I, II prices..., II capacities...]` per round.
    pub trajectory: Vec<Vec<f64>>,
}

/// Position of provider I's price among the merged classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceCase {
    /// `p^I >= p^II_1 >= p^II_2`
    AboveBoth,
    /// `p^II_1 >= p^I >= p^II_2`
    Between,
    /// `p^II_1 >= p^II_2 >= p^I`
    BelowBoth,
    /// `p^I >= p^II`
    Above,
    /// `p^II >= p^I`
    Below,
    /// Any other merged layout (e.g. a zero-capacity class).
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormCheck {
    pub case: PriceCase,
    /// Closed-form value, when the case's formula is available and applies.
    pub value: Option<f64>,
    pub note: Option<&'static str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub finite_difference: f64,
    /// Exact derivative of the equilibrium conditions by the implicit
    /// function theorem; `None` with empty classes.
    pub implicit: Option<f64>,
    pub closed_form: ClosedFormCheck,
}

/// `d(p_c Q_c)/dp_c` holding the other prices fixed, from the linearized
/// indifference system. A saturated market keeps its top cutoff pinned.
/// Empty classes other than `c` are dropped first; `None` when `c` itself
/// is empty.
fn implicit_profit_slope(sc: &MarketScenario, eq: &Equilibrium, c: usize) -> Option<f64> {
    if eq.is_empty_class(c) {
        return None;
    }
    let keep: Vec<usize> = (0..eq.class_count()).filter(|&i| !eq.is_empty_class(i)).collect();
    if keep.len() < eq.class_count() {
        let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let sub = sc.with_capacities(pick(&sc.capacities)).ok()?;
        let reduced = Equilibrium {
            cutoffs: pick(&eq.cutoffs),
            prices: pick(&eq.prices),
            usages: pick(&eq.usages),
            levels: pick(&eq.levels),
            ..eq.clone()
        };
        let c = keep.iter().position(|&i| i == c)?;
        return implicit_profit_slope(&sub, &reduced, c);
    }
    let n = eq.class_count();
    let theta = &eq.cutoffs;
    let dens: Vec<f64> = theta.iter().map(|&t| sc.dist.density(t)).collect();
    let k: Vec<f64> = (0..n)
        .map(|i| sc.model.marginal(eq.usages[i], sc.capacities[i]))
        .collect::<Result<_>>()
        .ok()?;
    // dK_i/dtheta_j
    let dk = |i: usize, j: usize| -> f64 {
        if j == i {
            k[i] * dens[i]
        } else if j == i + 1 {
            -k[i] * dens[j]
        } else {
            0.0
        }
    };
    let first = usize::from(eq.saturated);
    let unknowns: Vec<usize> = (first..n).collect();
    let equations: Vec<usize> = (first..n).collect();
    let size = unknowns.len();
    if size == 0 {
        return Some(eq.usages[c]);
    }
    // E_0 = V - theta_0 K_0 - p_0;  E_i = p_{i-1} - p_i - theta_i (K_i - K_{i-1})
    let mut a = vec![vec![0.0; size + 1]; size];
    for (r, &i) in equations.iter().enumerate() {
        for (col, &j) in unknowns.iter().enumerate() {
            a[r][col] = if i == 0 {
                -(if j == 0 { eq.levels[0] } else { 0.0 }) - theta[0] * dk(0, j)
            } else {
                -(if j == i { eq.levels[i] - eq.levels[i - 1] } else { 0.0 }) - theta[i] * (dk(i, j) - dk(i - 1, j))
            };
        }
        let de_dp = if i == 0 {
            -f64::from(u8::from(c == 0))
        } else {
            f64::from(u8::from(c + 1 == i)) - f64::from(u8::from(c == i))
        };
        a[r][size] = -de_dp;
    }
    let d_theta = solve(a)?;
    let mut d = vec![0.0; n];
    for (col, &j) in unknowns.iter().enumerate() {
        d[j] = d_theta[col];
    }
    let dq = dens[c] * d[c] - if c + 1 < n { dens[c + 1] * d[c + 1] } else { 0.0 };
    Some(eq.usages[c] + eq.prices[c] * dq)
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            for k in col..=n {
                a[r][k] -= factor * a[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (a[r][n] - s) / a[r][r];
    }
    Some(x)
}

/// Evaluates the closed form for `dpi^I/dp^I` matching the
/// merged layout. The closed forms assume an interior top cutoff and a
/// uniform type density on `[0, 1]`.
fn closed_form_check(me: &MarketEquilibrium, p: f64) -> ClosedFormCheck {
    let eq = &me.equilibrium;
    let n = eq.class_count();
    let pos = me.index_of_i();
    let case = match (n, pos) {
        (3, Some(0)) => PriceCase::AboveBoth,
        (3, Some(1)) => PriceCase::Between,
        (3, Some(2)) => PriceCase::BelowBoth,
        (2, Some(0)) => PriceCase::Above,
        (2, Some(1)) => PriceCase::Below,
        _ => PriceCase::Other,
    };
    let unavailable = |note| ClosedFormCheck { case, value: None, note: Some(note) };
    if matches!(case, PriceCase::BelowBoth | PriceCase::Below) {
        return unavailable("no usable closed form for this layout");
    }
    if case == PriceCase::Other {
        return unavailable("no closed form for this layout");
    }
    if eq.saturated {
        return unavailable("closed forms assume an unsaturated market");
    }
    if (0..n).any(|i| eq.is_empty_class(i)) {
        return unavailable("closed forms assume every class is used");
    }
    let sc = &me.market;
    let slopes: Option<Vec<f64>> = (0..n).map(|i| sc.model.marginal(eq.usages[i], sc.capacities[i]).ok()).collect();
    let Some(k) = slopes else {
        return unavailable("marginal congestion undefined at this profile");
    };
    // The closed forms coincide with the implicit derivative when every
    // class has the same marginal congestion, and drift from it otherwise.
    let note = k
        .iter()
        .any(|&x| (x - k[0]).abs() > 1e-12 * k[0].abs().max(1.0))
        .then_some("marginal congestion differs across classes; closed form is not exact here");
    let big = &eq.levels;
    let t = &eq.cutoffs;
    let q = &eq.usages;
    let value = match case {
        PriceCase::AboveBoth => {
            let (k1, k2, k3) = (k[0], k[1], k[2]);
            let (kk1, kk2, kk3) = (big[0], big[1], big[2]);
            let (t1, t2, t3) = (t[0], t[1], t[2]);
            let a = kk2 - kk3 - 2.0 * k3 * t3;
            let b = kk1 - kk2 - 2.0 * k2 * t2;
            let num = kk1 * p * (-k2 * k3 * t2 * t3 + k1 * t1 * a + b * a);
            let den = k1 * k2 * t1 * t2 * a - (kk1 + k1 * t1) * (k2 * k3 * t2 * t3 - b * a);
            (-p + k1 * q[0] * t1 + num / den) / (k1 * t1)
        }
        PriceCase::Between => {
            let (k1, k2, k3) = (k[0], k[1], k[2]);
            let (kk1, kk2, kk3) = (big[0], big[1], big[2]);
            let (t1, t2, t3) = (t[0], t[1], t[2]);
            let a = kk2 - kk3 - 2.0 * k3 * t3;
            let num = p * (kk1 + k1 * t1) * (kk2 - kk3 + k2 * t2 - 2.0 * k3 * t3) * (-kk2 + kk3 + k3 * t3);
            let den = (-kk2 + kk3 + 2.0 * k3 * t3)
                * (k2 * k3 * (kk1 + k1 * t1) * t2 * t3
                    + (-k1 * k2 * t1 * t2 - (kk1 + k1 * t1) * (kk1 - kk2 - 2.0 * k2 * t2)) * a);
            q[1] + p / a - num / den
        }
        PriceCase::Above => {
            let (k1, k2) = (k[0], k[1]);
            let (kk1, kk2) = (big[0], big[1]);
            let (t1, t2) = (t[0], t[1]);
            let q1 = q[0];
            let num = kk1 * kk1 * q1 + kk2 * (p - q1 * (kk1 + k1 * t1)) + k2 * (p - k1 * q1 * t1) * t2
                + kk1 * q1 * (k1 * t1 - 2.0 * k2 * t2);
            let den = kk1 * kk1 - k1 * t1 * (kk2 + k2 * t2) - kk1 * (kk2 - k1 * t1 + 2.0 * k2 * t2);
            num / den
        }
        _ => unreachable!("cases without a formula returned above"),
    };
    ClosedFormCheck { case, value: Some(value), note }
}
