//! Multi-class user equilibrium.
//!
//! Users of type `theta` pick the class maximizing `V - p_i - theta K_i`, or
//! stay out when every class gives negative utility. At an equilibrium the
//! classes are ordered by price (class 1 most expensive), the cutoff types
//! `theta_1 > ... > theta_m` separate the classes, and each cutoff user is
//! indifferent between the two classes (or the top class and opting out)
//! around it.
//!
//! Levels are computed with the closed-form congestion expressions continued
//! past the public domain where that continuation is finite: utilization and
//! loss accept `Q > C`, and the default-consumption model accepts `Q` below
//! its default use (giving a negative level).

use crate::congestion::{CongestionModel, USAGE_TIE};
use crate::error::{domain, PmpError, Result};
use crate::population::TypeDistribution;

/// Cutoff gaps at or below this are treated as ties (an empty class).
pub const CUTOFF_TIE: f64 = 1e-12;
/// Price-unit tolerance on the indifference equations, scaled by `max(1, V)`.
pub const PRICE_RESIDUAL: f64 = 1e-9;
/// Slack on the level ordering.
pub const LEVEL_SLACK: f64 = 1e-9;

const MAX_BISECTIONS: usize = 200;
/// Unplaced mass tolerated when the cascade overflows. Usage can grow like
/// a root of the level near an empty class, so a one-ulp step in the bottom
/// cutoff may still skip ~1e-9 of mass.
const SATURATION_GAP: f64 = 1e-6;

/// Everything needed to pose the equilibrium problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketScenario {
    pub value: f64,
    pub capacities: Vec<f64>,
    pub model: CongestionModel,
    pub dist: TypeDistribution,
}

/// A solved (or constructed) equilibrium; vectors are indexed by class,
/// most expensive class first.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub cutoffs: Vec<f64>,
    pub prices: Vec<f64>,
    pub usages: Vec<f64>,
    pub levels: Vec<f64>,
    /// Every user participates; the top cutoff is pinned at the support end
    /// and the top indifference equation holds as an inequality.
    pub saturated: bool,
    pub opt_out: f64,
}

impl Equilibrium {
    pub fn class_count(&self) -> usize {
        self.prices.len()
    }

    /// Provider profit `sum p_i Q_i`.
    pub fn provider_profit(&self) -> f64 {
        self.prices.iter().zip(&self.usages).map(|(p, q)| p * q).sum()
    }

    /// Lower cutoff of class `i` (`theta_{i+1}`, zero for the last class).
    pub fn lower_cutoff(&self, i: usize) -> f64 {
        self.cutoffs.get(i + 1).copied().unwrap_or(0.0)
    }

    pub fn is_empty_class(&self, i: usize) -> bool {
        self.usages[i] <= USAGE_TIE
    }
}

/// Per-constraint outcome of [`MarketScenario::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    /// Cutoffs decreasing, nonnegative, within the support.
    pub order_ok: bool,
    pub order_violation: f64,
    /// Levels nondecreasing along the nonempty classes.
    pub levels_ok: bool,
    pub level_violation: f64,
    /// Indifference equations.
    pub indifference_ok: bool,
    pub indifference_residual: f64,
    /// Classes whose upper and lower cutoffs coincide (empty classes).
    pub degenerate_classes: Vec<usize>,
    /// Indices `i` with `p_i = p_{i+1}`.
    pub equal_prices: Vec<usize>,
}

impl ConstraintReport {
    pub fn all_ok(&self) -> bool {
        self.order_ok && self.levels_ok && self.indifference_ok
    }
}

/// Outcome of one shot of the cascade for a given bottom cutoff.
enum Shot {
    Ok(Profile),
    /// Total usage would exceed the population.
    MassOverflow,
    /// A class would need a level its congestion function cannot reach.
    DomainOverflow(usize),
}

/// Cascade state in internal (sorted) order.
#[derive(Clone)]
struct Profile {
    usages: Vec<f64>,
    levels: Vec<f64>,
    upper: Vec<f64>,
    mass: f64,
    top: usize,
    residual: f64,
}

impl MarketScenario {
    pub fn new(
        value: f64,
        capacities: Vec<f64>,
        model: CongestionModel,
        dist: TypeDistribution,
    ) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(PmpError::InvalidInput(format!("V must be positive, got {value}")));
        }
        if capacities.is_empty() {
            return Err(PmpError::InvalidInput("at least one service class is required".into()));
        }
        if let Some(c) = capacities.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(PmpError::InvalidInput(format!("capacities must be positive, got {c}")));
        }
        Ok(Self { value, capacities, model, dist })
    }

    pub fn class_count(&self) -> usize {
        self.capacities.len()
    }

    /// The same market with the given capacities.
    pub fn with_capacities(&self, capacities: Vec<f64>) -> Result<Self> {
        Self::new(self.value, capacities, self.model, self.dist.clone())
    }

    fn tol(&self) -> f64 {
        PRICE_RESIDUAL * self.value.max(1.0)
    }

    fn level_of(&self, q: f64, c: f64, class: usize) -> Result<f64> {
        let k = self.model.extended_level(q, c);
        if k.is_finite() {
            Ok(k)
        } else {
            Err(domain(format!(
                "class {} usage {q} is outside the {} domain for capacity {c}",
                class + 1,
                self.model.family()
            )))
        }
    }

    /// Prices that make the cutoffs `theta` an equilibrium: forward
    /// substitution from `p_1 = V - theta_1 K_1`.
    pub fn prices_from_cutoffs(&self, theta: &[f64]) -> Result<Equilibrium> {
        self.prices_with_top_slack(theta, 0.0)
    }

    /// As [`prices_from_cutoffs`](Self::prices_from_cutoffs), with the top
    /// price lowered by `slack`. Only meaningful for saturated cutoffs
    /// (`theta_1 = theta_bar`), where the top equation is an inequality.
    pub fn prices_with_top_slack(&self, theta: &[f64], slack: f64) -> Result<Equilibrium> {
        let m = self.class_count();
        if theta.len() != m {
            return Err(PmpError::InvalidInput(format!("{m} classes but {} cutoffs", theta.len())));
        }
        let theta_bar = self.dist.support_end();
        if theta.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(PmpError::Order(format!("cutoffs must be finite and >= 0: {theta:?}")));
        }
        if theta[0] > theta_bar + CUTOFF_TIE {
            return Err(PmpError::Order(format!(
                "top cutoff {} exceeds the support end {theta_bar}",
                theta[0]
            )));
        }
        if let Some(i) = (1..m).find(|&i| theta[i] > theta[i - 1] + CUTOFF_TIE) {
            return Err(PmpError::Order(format!(
                "cutoffs must be decreasing: theta_{} = {} < theta_{} = {}",
                i,
                theta[i - 1],
                i + 1,
                theta[i]
            )));
        }
        let saturated = theta[0] >= theta_bar - CUTOFF_TIE;
        if slack != 0.0 && !(saturated && slack > 0.0) {
            return Err(PmpError::Precondition(
                "top-price slack requires saturated cutoffs and a positive slack".into(),
            ));
        }

        let mut cutoffs = theta.to_vec();
        if saturated {
            cutoffs[0] = theta_bar;
        }
        let mut usages = Vec::with_capacity(m);
        let mut levels = Vec::with_capacity(m);
        for i in 0..m {
            let upper = cutoffs[i];
            let lower = if i + 1 < m { cutoffs[i + 1].min(upper) } else { 0.0 };
            let q = (self.dist.cdf_at(upper) - self.dist.cdf_at(lower)).max(0.0);
            levels.push(self.level_of(q, self.capacities[i], i)?);
            usages.push(q);
        }
        let mut prices = Vec::with_capacity(m);
        prices.push(self.value - cutoffs[0] * levels[0] - slack);
        for i in 1..m {
            prices.push(prices[i - 1] - cutoffs[i] * (levels[i] - levels[i - 1]));
        }

        let tol = 1e-12 * self.value.max(1.0);
        if let Some(i) = (1..m).find(|&i| prices[i] > prices[i - 1] + tol) {
            return Err(PmpError::Order(format!(
                "implied prices increase from class {} ({}) to class {} ({})",
                i,
                prices[i - 1],
                i + 1,
                prices[i]
            )));
        }
        if prices[m - 1] < -tol || prices[0] > self.value + tol {
            return Err(PmpError::Order(format!("implied prices leave [0, V]: {prices:?}")));
        }
        let eq = Equilibrium {
            opt_out: 1.0 - usages.iter().sum::<f64>(),
            cutoffs,
            prices,
            usages,
            levels,
            saturated,
        };
        let nonempty: Vec<usize> = (0..m).filter(|&i| !eq.is_empty_class(i)).collect();
        if let Some(w) = nonempty.windows(2).find(|w| eq.levels[w[0]] > eq.levels[w[1]] + LEVEL_SLACK) {
            return Err(PmpError::Order(format!(
                "level ordering fails between classes {} and {}",
                w[0] + 1,
                w[1] + 1
            )));
        }
        Ok(eq)
    }

    /// Solves for the cutoffs induced by nonincreasing prices.
    ///
    /// The solver shoots on the bottom cutoff: given `theta_m`, each class
    /// above is filled to the level that makes the shared cutoff user
    /// indifferent, and the top class must leave the top cutoff user with
    /// zero utility. That residual falls monotonically as the bottom cutoff
    /// grows, so bisection finds the unique root, or shows that the
    /// population runs out first (saturation) or that some class cannot
    /// absorb its demand (no equilibrium).
    pub fn cutoffs_from_prices(&self, prices: &[f64]) -> Result<Equilibrium> {
        let m = self.class_count();
        if prices.len() != m {
            return Err(PmpError::InvalidInput(format!("{m} classes but {} prices", prices.len())));
        }
        if prices.iter().any(|p| !p.is_finite()) {
            return Err(PmpError::InvalidInput(format!("prices must be finite: {prices:?}")));
        }
        if prices[0] > self.value || prices[m - 1] < 0.0 || prices.windows(2).any(|w| w[1] > w[0]) {
            return Err(PmpError::InvalidInput(format!(
                "prices must satisfy V >= p_1 >= ... >= p_m >= 0, got {prices:?}"
            )));
        }

        // Within a group of equal prices the class with the smallest empty
        // level sits lowest, so it is the first to be filled.
        let floors: Vec<f64> = self
            .capacities
            .iter()
            .map(|&c| self.model.extended_level(0.0, c))
            .collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            prices[b]
                .total_cmp(&prices[a])
                .then(floors[b].total_cmp(&floors[a]))
        });

        let solver = Cascade {
            sc: self,
            prices: order.iter().map(|&i| prices[i]).collect(),
            caps: order.iter().map(|&i| self.capacities[i]).collect(),
            floors: order.iter().map(|&i| floors[i]).collect(),
        };
        let theta_bar = self.dist.support_end();

        let profile = match solver.shoot(0.0) {
            Shot::Ok(p) if p.residual > 0.0 => p,
            _ => return Ok(self.empty_market(prices, &floors)),
        };

        let (mut lo, mut hi) = (0.0, theta_bar);
        let mut best = profile;
        let saturated_profile = match solver.shoot(theta_bar) {
            Shot::Ok(p) if p.residual > 0.0 => Some(p),
            _ => None,
        };
        let (profile, saturated) = if let Some(p) = saturated_profile {
            (p, true)
        } else {
            for _ in 0..MAX_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                match solver.shoot(mid) {
                    Shot::Ok(p) if p.residual > 0.0 => {
                        lo = mid;
                        best = p;
                    }
                    _ => hi = mid,
                }
            }
            match solver.shoot(hi) {
                Shot::Ok(_) => (best, false),
                Shot::MassOverflow => {
                    if 1.0 - best.mass > SATURATION_GAP {
                        return Err(PmpError::Convergence(format!(
                            "population overflow with {} of the mass placed",
                            best.mass
                        )));
                    }
                    (solver.saturate(best)?, true)
                }
                Shot::DomainOverflow(i) => {
                    if best.residual <= self.tol() {
                        (best, false)
                    } else {
                        return Err(PmpError::NoEquilibrium {
                            binding_class: order[i] + 1,
                            reason: format!(
                                "class demand cannot be served within the {} domain; \
                                 users at the top cutoff keep surplus {}",
                                self.model.family(),
                                best.residual
                            ),
                        });
                    }
                }
            }
        };

        // a root at the support end is the boundary of saturation
        let (profile, saturated) = if !saturated && profile.upper[profile.top] >= theta_bar - CUTOFF_TIE {
            (solver.saturate(profile)?, true)
        } else {
            (profile, saturated)
        };
        let eq = self.assemble(prices, &order, profile, saturated);
        self.verify_solution(&eq)?;
        Ok(eq)
    }

    /// Equilibrium when every class charges the same price `p`: classes are
    /// filled to a common congestion level.
    pub fn identical_price_equilibrium(&self, price: f64) -> Result<Equilibrium> {
        self.cutoffs_from_prices(&vec![price; self.class_count()])
    }

    fn empty_market(&self, prices: &[f64], floors: &[f64]) -> Equilibrium {
        let m = self.class_count();
        Equilibrium {
            cutoffs: vec![0.0; m],
            prices: prices.to_vec(),
            usages: vec![0.0; m],
            levels: floors.to_vec(),
            saturated: false,
            opt_out: 1.0,
        }
    }

    fn assemble(&self, prices: &[f64], order: &[usize], profile: Profile, saturated: bool) -> Equilibrium {
        let m = self.class_count();
        let identity = order.iter().enumerate().all(|(k, &i)| k == i);
        let mut usages = vec![0.0; m];
        let mut levels = vec![0.0; m];
        for (k, &i) in order.iter().enumerate() {
            usages[i] = profile.usages[k];
            levels[i] = profile.levels[k];
        }
        let cutoffs = if identity {
            profile.upper.clone()
        } else {
            // equal-price classes were reordered; rebuild the cutoffs from
            // the usages in caller order
            let mut cutoffs = vec![0.0; m];
            let mut mass = 0.0;
            for i in (0..m).rev() {
                if usages[i] > 0.0 {
                    mass += usages[i];
                    cutoffs[i] = self.dist.quantile(mass);
                } else {
                    cutoffs[i] = if i + 1 < m { cutoffs[i + 1] } else { 0.0 };
                }
            }
            if saturated {
                let top = (0..m).find(|&i| usages[i] > 0.0).unwrap_or(0);
                for c in cutoffs.iter_mut().take(top + 1) {
                    *c = self.dist.support_end();
                }
            }
            cutoffs
        };
        Equilibrium {
            cutoffs,
            prices: prices.to_vec(),
            opt_out: 1.0 - usages.iter().sum::<f64>(),
            usages,
            levels,
            saturated,
        }
    }

    /// Re-checks a solved equilibrium: indifference along the nonempty
    /// classes, and no user type gains by switching classes or by joining or
    /// leaving the market.
    fn verify_solution(&self, eq: &Equilibrium) -> Result<()> {
        let report = self.validate(eq);
        if !report.indifference_ok || !report.levels_ok {
            return Err(PmpError::Convergence(format!(
                "solution misses the equilibrium conditions (indifference residual {}, level ordering {})",
                report.indifference_residual, report.level_violation
            )));
        }
        let tol = self.tol();
        let m = eq.class_count();
        let utility = |k: usize, theta: f64| self.value - eq.prices[k] - theta * eq.levels[k];
        let best_other = |theta: f64, except: Option<usize>| {
            (0..m)
                .filter(|&k| Some(k) != except)
                .map(|k| utility(k, theta))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        for i in (0..m).filter(|&i| !eq.is_empty_class(i)) {
            for theta in [eq.lower_cutoff(i), eq.cutoffs[i]] {
                let own = utility(i, theta);
                if own < best_other(theta, Some(i)) - tol || own < -tol {
                    return Err(PmpError::Convergence(format!(
                        "type {theta} assigned to class {} has a profitable deviation",
                        i + 1
                    )));
                }
            }
        }
        if !eq.saturated {
            let top = eq.cutoffs.first().copied().unwrap_or(0.0);
            for theta in [top, self.dist.support_end()] {
                if best_other(theta, None) > tol {
                    return Err(PmpError::Convergence(format!(
                        "type {theta} stays out despite positive utility"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks cutoff ordering, level ordering and the indifference equations
    /// for an arbitrary candidate equilibrium.
    pub fn validate(&self, eq: &Equilibrium) -> ConstraintReport {
        let m = eq.class_count().min(self.class_count());
        let theta = &eq.cutoffs;
        let theta_bar = self.dist.support_end();

        let mut order_violation: f64 = 0.0;
        if m > 0 {
            order_violation = order_violation.max(theta[0] - theta_bar).max(-theta[m - 1]);
        }
        for i in 1..m {
            order_violation = order_violation.max(theta[i] - theta[i - 1]);
        }
        let degenerate_classes: Vec<usize> = (0..m)
            .filter(|&i| theta[i] - eq.lower_cutoff(i) <= CUTOFF_TIE)
            .collect();
        let equal_prices: Vec<usize> =
            (0..m.saturating_sub(1)).filter(|&i| eq.prices[i] == eq.prices[i + 1]).collect();

        let nonempty: Vec<usize> = (0..m).filter(|&i| !degenerate_classes.contains(&i)).collect();
        let mut level_violation: f64 = 0.0;
        let mut indifference_residual: f64 = 0.0;
        for w in nonempty.windows(2) {
            let (a, b) = (w[0], w[1]);
            level_violation = level_violation.max(eq.levels[a] - eq.levels[b]);
            let r = eq.prices[a] - eq.prices[b] - theta[b] * (eq.levels[b] - eq.levels[a]);
            indifference_residual = indifference_residual.max(r.abs());
        }
        match nonempty.first() {
            Some(&top) => {
                let r = eq.prices[top] - (self.value - theta[top] * eq.levels[top]);
                let r = if eq.saturated { r.max(0.0) } else { r.abs() };
                indifference_residual = indifference_residual.max(r);
            }
            None => {
                // nobody joins: the cheapest class must offer no surplus
                if let Some(p) = eq.prices.iter().copied().reduce(f64::min) {
                    indifference_residual = indifference_residual.max((self.value - p).max(0.0));
                }
            }
        }

        ConstraintReport {
            order_ok: order_violation <= CUTOFF_TIE,
            order_violation: order_violation.max(0.0),
            levels_ok: level_violation <= LEVEL_SLACK,
            level_violation: level_violation.max(0.0),
            indifference_ok: indifference_residual <= self.tol(),
            indifference_residual,
            degenerate_classes,
            equal_prices,
        }
    }

    /// Social welfare of the allocation described by decreasing cutoffs,
    /// whatever prices support it.
    pub fn welfare_at_cutoffs(&self, theta: &[f64]) -> Result<f64> {
        let m = self.class_count();
        if theta.len() != m || theta.windows(2).any(|w| w[1] > w[0]) || theta.iter().any(|t| !(*t >= 0.0)) {
            return Err(PmpError::Order(format!("cutoffs must be decreasing and >= 0: {theta:?}")));
        }
        let mut total = 0.0;
        for i in 0..m {
            let lower = theta.get(i + 1).copied().unwrap_or(0.0);
            let q = (self.dist.cdf_at(theta[i]) - self.dist.cdf_at(lower)).max(0.0);
            let k = self.level_of(q, self.capacities[i], i)?;
            total += self.dist.welfare_unchecked(lower, theta[i], self.value, k);
        }
        Ok(total)
    }

    /// Social welfare: total user utility before payments.
    pub fn social_welfare(&self, eq: &Equilibrium) -> f64 {
        (0..eq.class_count())
            .map(|i| {
                self.dist
                    .welfare_unchecked(eq.lower_cutoff(i), eq.cutoffs[i], self.value, eq.levels[i])
            })
            .sum()
    }
}

struct Cascade<'a> {
    sc: &'a MarketScenario,
    prices: Vec<f64>,
    caps: Vec<f64>,
    floors: Vec<f64>,
}

impl Cascade<'_> {
    fn shoot(&self, bottom: f64) -> Shot {
        let m = self.prices.len();
        let model = &self.sc.model;
        let dist = &self.sc.dist;
        let mut usages = vec![0.0; m];
        let mut levels = self.floors.clone();
        let mut upper = vec![0.0; m];

        let b = m - 1;
        let mut mass = dist.cdf_at(bottom);
        let k = model.extended_level(mass, self.caps[b]);
        if !k.is_finite() {
            return Shot::DomainOverflow(b);
        }
        usages[b] = mass;
        levels[b] = k;
        upper[b] = bottom;
        let mut top = b;
        let mut t = bottom;

        for i in (0..b).rev() {
            let dp = self.prices[i] - self.prices[top];
            let target = if dp <= 0.0 {
                levels[top]
            } else if t > 0.0 {
                levels[top] - dp / t
            } else {
                f64::NEG_INFINITY
            };
            if target < self.floors[i] {
                upper[i] = t;
                continue;
            }
            let Some(q) = model.usage_for_level(target, self.caps[i]) else {
                return Shot::DomainOverflow(i);
            };
            let k = model.extended_level(q, self.caps[i]);
            if !k.is_finite() {
                return Shot::DomainOverflow(i);
            }
            mass += q;
            if mass > 1.0 {
                return Shot::MassOverflow;
            }
            t = dist.quantile(mass);
            usages[i] = q;
            levels[i] = k;
            upper[i] = t;
            top = i;
        }
        let residual = self.sc.value - self.prices[top] - t * levels[top];
        Shot::Ok(Profile { usages, levels, upper, mass, top, residual })
    }

    /// Pins the top cutoff at the support end. The mass the bisection left
    /// over goes to the class whose level it moves least: on a steep
    /// congestion curve a sliver of usage can shift a level by far more than
    /// the solver tolerance.
    fn saturate(&self, mut p: Profile) -> Result<Profile> {
        let theta_bar = self.sc.dist.support_end();
        let model = &self.sc.model;
        let top = p.top;
        let remainder = (1.0 - p.mass).max(0.0);
        let shift = |i: usize| model.extended_level(p.usages[i] + remainder, self.caps[i]) - p.levels[i];
        let receiver = (0..=top)
            .rev()
            .chain(top + 1..p.usages.len())
            .filter(|&i| p.usages[i] > USAGE_TIE && shift(i).is_finite())
            .min_by(|&a, &b| shift(a).total_cmp(&shift(b)))
            .unwrap_or(top);
        let q = p.usages[receiver] + remainder;
        let k = model.extended_level(q, self.caps[receiver]);
        if !k.is_finite() {
            return Err(PmpError::NoEquilibrium {
                binding_class: receiver + 1,
                reason: "full participation exceeds the class domain".into(),
            });
        }
        p.usages[receiver] = q;
        p.levels[receiver] = k;
        p.mass = 1.0;
        for u in p.upper.iter_mut().take(top + 1) {
            *u = theta_bar;
        }
        // With the cutoff now at theta_bar a pricier empty class may clear
        // its floor. Its usage is negligible (the bisection would have
        // filled it otherwise) but its level is not.
        let mut reference = top;
        for i in (0..top).rev() {
            let dp = self.prices[i] - self.prices[reference];
            let target = if dp <= 0.0 { p.levels[reference] } else { p.levels[reference] - dp / theta_bar };
            if target < self.floors[i] {
                continue;
            }
            let Some(q) = model.usage_for_level(target, self.caps[i]) else {
                break;
            };
            p.usages[i] = q;
            p.usages[receiver] -= q;
            p.levels[i] = target;
            reference = i;
        }
        p.top = reference;
        p.residual = self.sc.value - self.prices[reference] - theta_bar * p.levels[reference];
        Ok(p)
    }
}
