//! Congestion (negative externality) functions `K(Q, C)`.
//!
//! Every model is increasing in the usage `Q` of a service class and
//! decreasing in its capacity `C`. Besides point evaluation this module
//! provides the usage slope `k(Q, C) = dK/dQ`, the scaling classifier that
//! decides whether a model favours partitioning or multiplexing, and the
//! pairwise monotone-preference check on marginal congestion.

use std::fmt;

use crate::error::{domain, PmpError, Result};

/// Usages at or below this value are treated as an empty class.
pub const USAGE_TIE: f64 = 1e-12;

/// A congestion family together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CongestionModel {
    /// `Q / C`.
    Utilization,
    /// M/M/1 sojourn time `1 / (C - Q)`.
    Latency,
    /// M/G/1 sojourn time; `service_cv2` is the squared coefficient of
    /// variation of the service time.
    GeneralLatency { service_cv2: f64 },
    /// M/M/1/k blocking probability with buffer length `queue_len`.
    Loss { queue_len: u32 },
    /// Probability that all `C` servers fail, each failing with
    /// probability `failure_factor * Q / C`.
    Outage { failure_factor: f64 },
    /// Utilization net of a fixed consumption `default_use` that is incurred
    /// whenever the class is accessed: `(Q - default_use) / C`.
    UtilizationDefault { default_use: f64 },
}

impl CongestionModel {
    pub fn general_latency(service_cv2: f64) -> Result<Self> {
        if !(service_cv2.is_finite() && service_cv2 >= 0.0) {
            return Err(PmpError::InvalidInput(format!(
                "service-time variation must be finite and >= 0, got {service_cv2}"
            )));
        }
        Ok(Self::GeneralLatency { service_cv2 })
    }

    pub fn loss(queue_len: u32) -> Result<Self> {
        if queue_len == 0 {
            return Err(PmpError::InvalidInput("queue length must be >= 1".into()));
        }
        Ok(Self::Loss { queue_len })
    }

    pub fn outage(failure_factor: f64) -> Result<Self> {
        if !(failure_factor > 0.0 && failure_factor <= 1.0) {
            return Err(PmpError::InvalidInput(format!(
                "failure factor must lie in (0, 1], got {failure_factor}"
            )));
        }
        Ok(Self::Outage { failure_factor })
    }

    pub fn utilization_default(default_use: f64) -> Result<Self> {
        if !(default_use.is_finite() && default_use >= 0.0) {
            return Err(PmpError::InvalidInput(format!(
                "default consumption must be finite and >= 0, got {default_use}"
            )));
        }
        Ok(Self::UtilizationDefault { default_use })
    }

    /// Short family name, as used in scenario files.
    pub fn family(&self) -> &'static str {
        match self {
            Self::Utilization => "utilization",
            Self::Latency => "latency",
            Self::GeneralLatency { .. } => "general_latency",
            Self::Loss { .. } => "loss",
            Self::Outage { .. } => "outage",
            Self::UtilizationDefault { .. } => "utilization_default",
        }
    }

    fn check_domain(&self, q: f64, c: f64) -> Result<()> {
        if !(c.is_finite() && c > 0.0) {
            return Err(domain(format!("capacity must be positive, got {c}")));
        }
        if !(q.is_finite() && q >= 0.0) {
            return Err(domain(format!("usage must be >= 0, got {q}")));
        }
        match *self {
            Self::Latency | Self::GeneralLatency { .. } if q >= c => Err(domain(format!(
                "{} requires usage below capacity (Q = {q}, C = {c})",
                self.family()
            ))),
            Self::Outage { failure_factor } if failure_factor * q > c => Err(domain(format!(
                "outage failure probability exceeds one (Q = {q}, C = {c})"
            ))),
            Self::UtilizationDefault { default_use } if q < default_use => Err(domain(format!(
                "usage {q} is below the default consumption {default_use}"
            ))),
            _ => Ok(()),
        }
    }

    /// Congestion level `K(Q, C)`.
    pub fn evaluate(&self, q: f64, c: f64) -> Result<f64> {
        self.check_domain(q, c)?;
        Ok(self.formula(q, c))
    }

    fn formula(&self, q: f64, c: f64) -> f64 {
        match *self {
            Self::Utilization => q / c,
            Self::Latency => 1.0 / (c - q),
            // Q (1 + d) / (2C (C - Q)) + 1/C, arranged so that d = 1 gives
            // 1 / (C - Q) bit for bit
            Self::GeneralLatency { service_cv2 } => (1.0 + q * (service_cv2 - 1.0) / (2.0 * c)) / (c - q),
            Self::Loss { queue_len } => loss_probability(q / c, queue_len),
            Self::Outage { failure_factor } => {
                if q == 0.0 {
                    0.0
                } else {
                    (failure_factor * q / c).powf(c)
                }
            }
            Self::UtilizationDefault { default_use } => (q - default_use) / c,
        }
    }

    /// Marginal congestion `k(Q, C) = dK/dQ`.
    ///
    /// Closed form for the utilization and latency families; central finite
    /// differences with step `max(1e-6, 1e-6 C)` otherwise.
    pub fn marginal(&self, q: f64, c: f64) -> Result<f64> {
        self.check_domain(q, c)?;
        match *self {
            Self::Utilization | Self::UtilizationDefault { .. } => Ok(1.0 / c),
            Self::Latency => Ok(1.0 / ((c - q) * (c - q))),
            _ => {
                let h = (1e-6 * c).max(1e-6);
                let upper_ok = match *self {
                    Self::GeneralLatency { .. } => q + h < c,
                    Self::Outage { failure_factor } => failure_factor * (q + h) <= c,
                    _ => true,
                };
                if q - h < 0.0 || !upper_ok {
                    return Err(PmpError::Degenerate(format!(
                        "usage {q} lies within {h} of the {} domain boundary",
                        self.family()
                    )));
                }
                Ok((self.formula(q + h, c) - self.formula(q - h, c)) / (2.0 * h))
            }
        }
    }

    /// Level with the closed form continued past the public domain, used by
    /// the equilibrium search. Returns `+inf` where the model has no finite
    /// continuation (latency at or beyond capacity, outage probability above
    /// one).
    pub(crate) fn extended_level(&self, q: f64, c: f64) -> f64 {
        match *self {
            Self::Latency | Self::GeneralLatency { .. } if q >= c => f64::INFINITY,
            Self::Outage { failure_factor } if failure_factor * q > c => f64::INFINITY,
            _ => self.formula(q, c),
        }
    }

    /// Usage at which [`extended_level`](Self::extended_level) reaches
    /// `level`, or `None` when the level is unattainable. Callers must pass
    /// `level >= extended_level(0, c)`.
    pub(crate) fn usage_for_level(&self, level: f64, c: f64) -> Option<f64> {
        if !level.is_finite() {
            return None;
        }
        let q = match *self {
            Self::Utilization => level * c,
            Self::UtilizationDefault { default_use } => level * c + default_use,
            Self::Latency => {
                if level <= 1.0 / c {
                    0.0
                } else {
                    c - 1.0 / level
                }
            }
            Self::GeneralLatency { service_cv2 } => {
                let excess = level - 1.0 / c;
                if excess <= 0.0 {
                    0.0
                } else {
                    let a = (1.0 + service_cv2) / (2.0 * c);
                    excess * c / (a + excess)
                }
            }
            Self::Loss { queue_len } => {
                if level >= 1.0 {
                    return None;
                }
                c * invert_increasing(|rho| loss_probability(rho, queue_len), level)
            }
            Self::Outage { failure_factor } => {
                if level > 1.0 {
                    return None;
                }
                if level <= 0.0 {
                    0.0
                } else {
                    c / failure_factor * level.powf(1.0 / c)
                }
            }
        };
        Some(q.max(0.0))
    }
}

impl fmt::Display for CongestionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Utilization | Self::Latency => f.write_str(self.family()),
            Self::GeneralLatency { service_cv2 } => write!(f, "general_latency(delta2={service_cv2})"),
            Self::Loss { queue_len } => write!(f, "loss(kappa={queue_len})"),
            Self::Outage { failure_factor } => write!(f, "outage(eps={failure_factor})"),
            Self::UtilizationDefault { default_use } => {
                write!(f, "utilization_default(eps={default_use})")
            }
        }
    }
}

/// `rho^k (1 - rho) / (1 - rho^(k+1))`, evaluated as `rho^k / sum_{j<=k} rho^j`
/// so that `rho = 1` needs no special case.
fn loss_probability(rho: f64, queue_len: u32) -> f64 {
    if rho <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for _ in 0..=queue_len {
            sum += term;
            term *= rho;
        }
        rho.powi(queue_len as i32) / sum
    } else {
        // divide through by rho^k to keep the terms bounded
        let inv = 1.0 / rho;
        let mut sum = 0.0;
        let mut term = 1.0;
        for _ in 0..=queue_len {
            sum += term;
            term *= inv;
        }
        1.0 / sum
    }
}

/// Solves `f(x) = target` for an increasing `f` on `[0, inf)` with `f(0) <= target`.
fn invert_increasing(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    if target <= f(0.0) {
        return 0.0;
    }
    let mut hi = 1.0;
    while f(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ---------------------------------------------------------------------------
// Scaling classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingVerdict {
    /// `K(Q, C) >= K(aQ, aC)` everywhere: splitting a class does not hurt.
    PartitionPreferred,
    /// `K(Q, C) <= K(aQ, aC)` everywhere: merging classes does not hurt.
    MultiplexingPreferred,
    Indifferent,
    Mixed,
}

impl fmt::Display for ScalingVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::PartitionPreferred => "PartitionPreferred",
            Self::MultiplexingPreferred => "MultiplexingPreferred",
            Self::Indifferent => "Indifferent",
            Self::Mixed => "Mixed",
        };
        f.write_str(s)
    }
}

/// A sampled point `(Q, C, alpha)` and its gap `K(Q, C) - K(alpha Q, alpha C)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingWitness {
    pub usage: f64,
    pub capacity: f64,
    pub alpha: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingClass {
    pub verdict: ScalingVerdict,
    /// First point where the gap exceeds the slack in the partition direction.
    pub partition_witness: Option<ScalingWitness>,
    /// First point where the gap exceeds the slack in the multiplexing direction.
    pub multiplexing_witness: Option<ScalingWitness>,
    pub max_abs_gap: f64,
    pub points_checked: usize,
}

/// Sample points for [`classify_scaling`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingGrid {
    pub points: Vec<(f64, f64)>,
    pub alphas: Vec<f64>,
    /// Drop `(Q, C, alpha)` triples outside the model domain instead of
    /// failing.
    pub skip_out_of_domain: bool,
}

impl ScalingGrid {
    /// `alpha` in `{0.1, ..., 0.9}`; 20 capacities on `[0.2, 2]`, each with 20
    /// usages on `[0.05 C, 0.95 C]`.
    pub fn standard() -> Self {
        let n = 20;
        let mut points = Vec::with_capacity(n * n);
        for i in 0..n {
            let c = 0.2 + 1.8 * i as f64 / (n - 1) as f64;
            for j in 0..n {
                let frac = 0.05 + 0.9 * j as f64 / (n - 1) as f64;
                points.push((frac * c, c));
            }
        }
        let alphas = (1..=9).map(|i| i as f64 / 10.0).collect();
        Self { points, alphas, skip_out_of_domain: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingTolerance {
    /// Every gap within this bound means the model is indifferent.
    pub indifferent: f64,
    /// Slack allowed against the dominant inequality.
    pub slack: f64,
}

impl Default for ScalingTolerance {
    fn default() -> Self {
        Self { indifferent: 1e-12, slack: 1e-9 }
    }
}

/// Compares `K(Q, C)` with `K(alpha Q, alpha C)` over a grid.
pub fn classify_scaling(
    model: &CongestionModel,
    grid: &ScalingGrid,
    tol: ScalingTolerance,
) -> Result<ScalingClass> {
    let mut partition_witness = None;
    let mut multiplexing_witness = None;
    let mut max_abs_gap: f64 = 0.0;
    let mut min_gap = f64::INFINITY;
    let mut max_gap = f64::NEG_INFINITY;
    let mut points_checked = 0;

    for &(q, c) in &grid.points {
        for &alpha in &grid.alphas {
            let pair = model
                .evaluate(q, c)
                .and_then(|full| Ok((full, model.evaluate(alpha * q, alpha * c)?)));
            let (full, scaled) = match pair {
                Ok(v) => v,
                Err(_) if grid.skip_out_of_domain => continue,
                Err(e) => return Err(e),
            };
            let gap = full - scaled;
            points_checked += 1;
            max_abs_gap = max_abs_gap.max(gap.abs());
            min_gap = min_gap.min(gap);
            max_gap = max_gap.max(gap);
            let witness = ScalingWitness { usage: q, capacity: c, alpha, gap };
            if gap > tol.slack && partition_witness.is_none() {
                partition_witness = Some(witness);
            }
            if gap < -tol.slack && multiplexing_witness.is_none() {
                multiplexing_witness = Some(witness);
            }
        }
    }
    if points_checked == 0 {
        return Err(PmpError::InvalidInput("scaling grid has no valid points".into()));
    }

    let verdict = if max_abs_gap <= tol.indifferent {
        ScalingVerdict::Indifferent
    } else if min_gap >= -tol.slack && max_gap > tol.slack {
        ScalingVerdict::PartitionPreferred
    } else if max_gap <= tol.slack && min_gap < -tol.slack {
        ScalingVerdict::MultiplexingPreferred
    } else {
        ScalingVerdict::Mixed
    };
    Ok(ScalingClass { verdict, partition_witness, multiplexing_witness, max_abs_gap, points_checked })
}

// ---------------------------------------------------------------------------
// Monotone preference
// ---------------------------------------------------------------------------

/// Which ordering of marginal congestion a usage profile exhibits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotoneCase {
    /// Larger usage always comes with a larger slope.
    M1,
    /// Larger usage always comes with a smaller slope.
    M2,
    /// Both implications hold (no distinct usages, or all slopes tie).
    Both,
    Neither,
}

impl fmt::Display for MonotoneCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::M1 => "M1",
            Self::M2 => "M2",
            Self::Both => "Both",
            Self::Neither => "Neither",
        };
        f.write_str(s)
    }
}

/// Tie tolerance on slopes and usages in [`monotone_case`].
pub const SLOPE_TIE: f64 = 1e-12;

/// Evaluates both monotone-preference implications over every ordered pair
/// of classes in one usage profile.
pub fn monotone_case(
    model: &CongestionModel,
    capacities: &[f64],
    usages: &[f64],
) -> Result<MonotoneCase> {
    if capacities.len() != usages.len() {
        return Err(PmpError::InvalidInput(format!(
            "{} capacities but {} usages",
            capacities.len(),
            usages.len()
        )));
    }
    let slopes = usages
        .iter()
        .zip(capacities)
        .map(|(&q, &c)| model.marginal(q, c))
        .collect::<Result<Vec<_>>>()?;

    let mut m1 = true;
    let mut m2 = true;
    for i in 0..usages.len() {
        for j in 0..usages.len() {
            if usages[i] - usages[j] <= SLOPE_TIE {
                continue;
            }
            let diff = slopes[i] - slopes[j];
            if diff.abs() <= SLOPE_TIE {
                continue;
            }
            if diff < 0.0 {
                m1 = false;
            } else {
                m2 = false;
            }
        }
    }
    Ok(match (m1, m2) {
        (true, true) => MonotoneCase::Both,
        (true, false) => MonotoneCase::M1,
        (false, true) => MonotoneCase::M2,
        (false, false) => MonotoneCase::Neither,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotoneVerdict {
    ConsistentM1,
    ConsistentM2,
    /// Every sampled profile was a tie (`Both`).
    Unconstrained,
    Violated,
}

impl fmt::Display for MonotoneVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::ConsistentM1 => "ConsistentM1",
            Self::ConsistentM2 => "ConsistentM2",
            Self::Unconstrained => "Unconstrained",
            Self::Violated => "Violated",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMonotone {
    pub verdict: MonotoneVerdict,
    /// On violation: the profile that fixed a case and the one that broke it
    /// (the same profile twice when a single profile is `Neither`).
    pub witnesses: Option<(Vec<f64>, Vec<f64>)>,
    pub profiles_checked: usize,
}

/// Checks that every sampled profile agrees on one monotone case.
pub fn global_monotone<I>(
    model: &CongestionModel,
    capacities: &[f64],
    profiles: I,
) -> Result<GlobalMonotone>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut established: Option<(MonotoneCase, Vec<f64>)> = None;
    let mut profiles_checked = 0;
    for profile in profiles {
        profiles_checked += 1;
        let case = monotone_case(model, capacities, &profile)?;
        match case {
            MonotoneCase::Both => {}
            MonotoneCase::Neither => {
                return Ok(GlobalMonotone {
                    verdict: MonotoneVerdict::Violated,
                    witnesses: Some((profile.clone(), profile)),
                    profiles_checked,
                });
            }
            MonotoneCase::M1 | MonotoneCase::M2 => match &established {
                None => established = Some((case, profile)),
                Some((seen, first)) if *seen != case => {
                    return Ok(GlobalMonotone {
                        verdict: MonotoneVerdict::Violated,
                        witnesses: Some((first.clone(), profile)),
                        profiles_checked,
                    });
                }
                Some(_) => {}
            },
        }
    }
    let verdict = match established {
        None => MonotoneVerdict::Unconstrained,
        Some((MonotoneCase::M1, _)) => MonotoneVerdict::ConsistentM1,
        Some(_) => MonotoneVerdict::ConsistentM2,
    };
    Ok(GlobalMonotone { verdict, witnesses: None, profiles_checked })
}

/// Deterministic grid of usage profiles: each class takes the usages
/// `step, 2 step, ...` at which its marginal congestion is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UsageGrid {
    pub step: f64,
    /// Keep only profiles whose levels are nondecreasing along the class
    /// index, i.e. profiles that can occur at an equilibrium.
    pub respect_level_order: bool,
}

impl Default for UsageGrid {
    fn default() -> Self {
        Self { step: 0.05, respect_level_order: false }
    }
}

impl UsageGrid {
    pub fn level_ordered(step: f64) -> Self {
        Self { step, respect_level_order: true }
    }

    pub fn profiles(&self, model: &CongestionModel, capacities: &[f64]) -> Vec<Vec<f64>> {
        let per_class: Vec<Vec<f64>> = capacities
            .iter()
            .map(|&c| {
                // the grid must stay finite even for unbounded domains
                let limit = (4.0 * c).max(1.0);
                (1..)
                    .map(|j| j as f64 * self.step)
                    .take_while(|&q| q <= limit + 1e-12)
                    .filter(|&q| model.marginal(q, c).is_ok())
                    .collect()
            })
            .collect();

        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for values in &per_class {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&q| {
                        let mut p = prefix.clone();
                        p.push(q);
                        p
                    })
                })
                .collect();
        }
        if self.respect_level_order {
            out.retain(|profile| {
                let levels: Vec<f64> = profile
                    .iter()
                    .zip(capacities)
                    .map(|(&q, &c)| model.evaluate(q, c).unwrap_or(f64::NAN))
                    .collect();
                levels.windows(2).all(|w| w[0] <= w[1] + 1e-12)
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn table_values() {
        assert!(close(CongestionModel::Utilization.evaluate(0.4, 1.0).unwrap(), 0.4, 1e-15));
        assert_eq!(CongestionModel::Utilization.evaluate(0.0, 3.0).unwrap(), 0.0);
        assert!(close(CongestionModel::Latency.evaluate(0.5, 1.0).unwrap(), 2.0, 1e-15));
        let loss = CongestionModel::loss(2).unwrap();
        assert!(close(loss.evaluate(0.5, 1.0).unwrap(), 1.0 / 7.0, 1e-15));
        let outage = CongestionModel::outage(0.5).unwrap();
        assert!(close(outage.evaluate(0.5, 2.0).unwrap(), 0.015625, 1e-15));
        let glat = CongestionModel::general_latency(1.0).unwrap();
        assert!(close(glat.evaluate(0.3, 1.0).unwrap(), 1.0 / 0.7, 1e-15));
    }

    #[test]
    fn domain_errors() {
        let lat = CongestionModel::Latency;
        assert!(matches!(lat.evaluate(1.0, 1.0), Err(PmpError::Domain(_))));
        assert!(matches!(lat.evaluate(-0.1, 1.0), Err(PmpError::Domain(_))));
        assert!(matches!(CongestionModel::Utilization.evaluate(0.1, 0.0), Err(PmpError::Domain(_))));
        let glat = CongestionModel::general_latency(0.5).unwrap();
        assert!(glat.evaluate(1.2, 1.0).is_err());
        let ud = CongestionModel::utilization_default(0.1).unwrap();
        assert!(matches!(ud.evaluate(0.05, 1.0), Err(PmpError::Domain(_))));
        assert_eq!(ud.evaluate(0.1, 1.0).unwrap(), 0.0);
        let outage = CongestionModel::outage(0.5).unwrap();
        assert!(outage.evaluate(2.5, 1.0).is_err());
        assert!(outage.evaluate(1.5, 1.0).is_ok());
    }

    #[test]
    fn loss_is_continuous_through_full_load() {
        for kappa in 1..6 {
            let loss = CongestionModel::loss(kappa).unwrap();
            let at = loss.evaluate(1.0, 1.0).unwrap();
            assert!((at - 1.0 / (kappa as f64 + 1.0)).abs() <= 1e-12);
            for eps in [1e-4, 1e-7, 1e-9, 1e-12] {
                // the slope at full load is below one
                assert!((loss.evaluate(1.0 - eps, 1.0).unwrap() - at).abs() <= eps);
                assert!((loss.evaluate(1.0 + eps, 1.0).unwrap() - at).abs() <= eps);
            }
        }
    }

    #[test]
    fn marginal_values() {
        assert!(close(CongestionModel::Utilization.marginal(0.1, 0.5).unwrap(), 2.0, 1e-15));
        assert!(close(CongestionModel::Latency.marginal(0.2, 0.3).unwrap(), 100.0, 1e-12));
        // d/drho of rho^2 / (1 + rho + rho^2) at 0.5 is 20/49
        let loss = CongestionModel::loss(2).unwrap();
        assert!((loss.marginal(0.5, 1.0).unwrap() - 20.0 / 49.0).abs() < 1e-5);
    }

    #[test]
    fn marginal_near_boundary_is_degenerate() {
        let loss = CongestionModel::loss(3).unwrap();
        assert!(matches!(loss.marginal(1e-8, 1.0), Err(PmpError::Degenerate(_))));
        let glat = CongestionModel::general_latency(2.0).unwrap();
        assert!(matches!(glat.marginal(1.0 - 1e-8, 1.0), Err(PmpError::Degenerate(_))));
    }

    #[test]
    fn inverse_recovers_usage() {
        let models = [
            CongestionModel::Utilization,
            CongestionModel::Latency,
            CongestionModel::general_latency(0.4).unwrap(),
            CongestionModel::loss(3).unwrap(),
            CongestionModel::outage(0.7).unwrap(),
            CongestionModel::utilization_default(0.05).unwrap(),
        ];
        for model in models {
            for &(q, c) in &[(0.1, 0.3), (0.25, 0.7), (0.6, 1.0), (0.05, 2.0)] {
                let level = model.extended_level(q, c);
                let back = model.usage_for_level(level, c).unwrap();
                assert!((back - q).abs() < 1e-12, "{model}: {q} -> {level} -> {back}");
            }
        }
    }

    #[test]
    fn scaling_verdicts() {
        let grid = ScalingGrid::standard();
        let tol = ScalingTolerance::default();
        let v = |m: CongestionModel| classify_scaling(&m, &grid, tol).unwrap().verdict;
        assert_eq!(v(CongestionModel::Utilization), ScalingVerdict::Indifferent);
        assert_eq!(v(CongestionModel::Latency), ScalingVerdict::MultiplexingPreferred);
        assert_eq!(v(CongestionModel::loss(2).unwrap()), ScalingVerdict::Indifferent);
        assert_eq!(
            v(CongestionModel::utilization_default(0.1).unwrap()),
            ScalingVerdict::PartitionPreferred
        );
    }

    #[test]
    fn mixed_verdict_reports_both_witnesses() {
        // latency gaps are negative, utilization-default gaps positive; a grid
        // that mixes the two is impossible for one model, so build a grid where
        // the explicit check propagates domain errors instead
        let grid = ScalingGrid { points: vec![(0.9, 1.0)], alphas: vec![0.5], skip_out_of_domain: false };
        let ud = CongestionModel::utilization_default(0.5).unwrap();
        assert!(matches!(
            classify_scaling(&ud, &grid, ScalingTolerance::default()),
            Err(PmpError::Domain(_))
        ));
    }

    #[test]
    fn section_profiles() {
        let lat = CongestionModel::Latency;
        let caps = [0.3, 0.7];
        assert_eq!(monotone_case(&lat, &caps, &[0.2, 0.5]).unwrap(), MonotoneCase::M2);
        assert_eq!(monotone_case(&lat, &caps, &[0.05, 0.5]).unwrap(), MonotoneCase::M1);
        assert_eq!(monotone_case(&lat, &caps, &[0.2, 0.2]).unwrap(), MonotoneCase::Both);
        let g = global_monotone(&lat, &caps, vec![vec![0.2, 0.5], vec![0.05, 0.5]]).unwrap();
        assert_eq!(g.verdict, MonotoneVerdict::Violated);
        assert_eq!(g.witnesses, Some((vec![0.2, 0.5], vec![0.05, 0.5])));
    }

    #[test]
    fn neither_case() {
        // three classes: slopes 1/C are fixed, usages chosen so one pair agrees
        // with M1 and another with M2
        let caps = [0.2, 0.5, 1.0];
        let case = monotone_case(&CongestionModel::Utilization, &caps, &[0.1, 0.3, 0.05]).unwrap();
        assert_eq!(case, MonotoneCase::Neither);
    }

    #[test]
    fn usage_grid_respects_domain() {
        let grid = UsageGrid::default();
        let profiles = grid.profiles(&CongestionModel::Latency, &[0.3, 0.7]);
        assert!(!profiles.is_empty());
        assert!(profiles.iter().all(|p| p[0] < 0.3 && p[1] < 0.7));
        let ordered = UsageGrid::level_ordered(0.05).profiles(&CongestionModel::Utilization, &[0.3, 0.7]);
        assert!(ordered.iter().all(|p| p[0] / 0.3 <= p[1] / 0.7 + 1e-12));
    }
}
