//! User-type distributions on `[0, theta_bar]`.

use crate::error::{domain, PmpError, Result};

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Uniform,
    /// Breakpoints `(theta_j, F(theta_j))`, strictly increasing in both
    /// coordinates, from `(0, 0)` to `(theta_bar, 1)`.
    Tabulated(Vec<(f64, f64)>),
}

/// Distribution of the congestion sensitivity `theta` across users.
///
/// Both kinds have a piecewise-constant density, so every integral is
/// evaluated in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeDistribution {
    kind: Kind,
    theta_bar: f64,
}

impl Default for TypeDistribution {
    fn default() -> Self {
        Self { kind: Kind::Uniform, theta_bar: 1.0 }
    }
}

impl TypeDistribution {
    pub fn uniform(theta_bar: f64) -> Result<Self> {
        if !(theta_bar > 0.0 && theta_bar <= 1.0) {
            return Err(PmpError::InvalidInput(format!(
                "support end must lie in (0, 1], got {theta_bar}"
            )));
        }
        Ok(Self { kind: Kind::Uniform, theta_bar })
    }

    /// Piecewise-linear CDF through the given breakpoints.
    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        let bad = |msg: String| Err(PmpError::InvalidInput(msg));
        if points.len() < 2 {
            return bad("a tabulated distribution needs at least two breakpoints".into());
        }
        if points.iter().any(|&(t, f)| !t.is_finite() || !f.is_finite()) {
            return bad("breakpoints must be finite".into());
        }
        if points[0] != (0.0, 0.0) {
            return bad(format!("first breakpoint must be (0, 0), got {:?}", points[0]));
        }
        let (theta_bar, last) = points[points.len() - 1];
        if last != 1.0 {
            return bad(format!("CDF must reach 1 at the last breakpoint, got {last}"));
        }
        if !(theta_bar <= 1.0) {
            return bad(format!("support end must lie in (0, 1], got {theta_bar}"));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0 && w[1].1 > w[0].1) {
                return bad(format!(
                    "breakpoints must be strictly increasing in theta and F: {:?} then {:?}",
                    w[0], w[1]
                ));
            }
        }
        Ok(Self { kind: Kind::Tabulated(points), theta_bar })
    }

    pub fn support_end(&self) -> f64 {
        self.theta_bar
    }

    /// `F(theta)`, clamped to 1 beyond the support.
    pub fn cdf(&self, theta: f64) -> Result<f64> {
        if theta.is_nan() || theta < 0.0 {
            return Err(domain(format!("type must be >= 0, got {theta}")));
        }
        Ok(self.cdf_at(theta))
    }

    pub(crate) fn cdf_at(&self, theta: f64) -> f64 {
        if theta >= self.theta_bar {
            return 1.0;
        }
        if theta <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Uniform => theta / self.theta_bar,
            Kind::Tabulated(pts) => {
                let (a, b) = segment(pts, theta);
                a.1 + (b.1 - a.1) * (theta - a.0) / (b.0 - a.0)
            }
        }
    }

    /// Density `f(theta)`; right-continuous at tabulated breakpoints.
    pub fn density(&self, theta: f64) -> f64 {
        if !(theta >= 0.0 && theta < self.theta_bar) {
            return 0.0;
        }
        match &self.kind {
            Kind::Uniform => 1.0 / self.theta_bar,
            Kind::Tabulated(pts) => {
                let (a, b) = segment(pts, theta);
                (b.1 - a.1) / (b.0 - a.0)
            }
        }
    }

    /// Smallest type with `F(theta) = mass`; `theta_bar` for `mass >= 1`.
    pub fn quantile(&self, mass: f64) -> f64 {
        if mass >= 1.0 {
            return self.theta_bar;
        }
        if !(mass > 0.0) {
            return 0.0;
        }
        match &self.kind {
            Kind::Uniform => mass * self.theta_bar,
            Kind::Tabulated(pts) => {
                let k = pts.partition_point(|&(_, f)| f <= mass).clamp(1, pts.len() - 1);
                let (a, b) = (pts[k - 1], pts[k]);
                a.0 + (b.0 - a.0) * (mass - a.1) / (b.1 - a.1)
            }
        }
    }

    /// `int_lo^hi theta f(theta) dtheta`.
    pub fn weighted_mass(&self, lo: f64, hi: f64) -> Result<f64> {
        check_bounds(lo, hi)?;
        Ok(self.weighted_mass_unchecked(lo, hi))
    }

    pub(crate) fn weighted_mass_unchecked(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.clamp(0.0, self.theta_bar);
        let hi = hi.clamp(0.0, self.theta_bar);
        if hi <= lo {
            return 0.0;
        }
        match &self.kind {
            Kind::Uniform => (hi * hi - lo * lo) / (2.0 * self.theta_bar),
            Kind::Tabulated(pts) => pts
                .windows(2)
                .map(|w| {
                    let a = lo.max(w[0].0);
                    let b = hi.min(w[1].0);
                    if b <= a {
                        0.0
                    } else {
                        let density = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                        density * (b * b - a * a) / 2.0
                    }
                })
                .sum(),
        }
    }

    /// Utility mass `V (F(hi) - F(lo)) - K int_lo^hi theta f`, i.e. the
    /// welfare of the users in `[lo, hi]` facing congestion level `K`.
    pub fn welfare_integral(&self, lo: f64, hi: f64, value: f64, level: f64) -> Result<f64> {
        check_bounds(lo, hi)?;
        Ok(self.welfare_unchecked(lo, hi, value, level))
    }

    pub(crate) fn welfare_unchecked(&self, lo: f64, hi: f64, value: f64, level: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        value * (self.cdf_at(hi) - self.cdf_at(lo)) - level * self.weighted_mass_unchecked(lo, hi)
    }
}

fn check_bounds(lo: f64, hi: f64) -> Result<()> {
    if lo.is_nan() || hi.is_nan() || lo < 0.0 || hi < lo {
        return Err(domain(format!("integration bounds must satisfy 0 <= lo <= hi, got [{lo}, {hi}]")));
    }
    Ok(())
}

/// Breakpoints enclosing `theta`, assumed inside the support.
fn segment(pts: &[(f64, f64)], theta: f64) -> ((f64, f64), (f64, f64)) {
    let k = pts.partition_point(|&(t, _)| t <= theta).clamp(1, pts.len() - 1);
    (pts[k - 1], pts[k])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> TypeDistribution {
        TypeDistribution::tabulated(vec![(0.0, 0.0), (0.5, 0.8), (1.0, 1.0)]).unwrap()
    }

    #[test]
    fn cdf_values() {
        let u = TypeDistribution::default();
        assert_eq!(u.cdf(0.4).unwrap(), 0.4);
        assert_eq!(u.cdf(2.0).unwrap(), 1.0);
        assert!(matches!(u.cdf(-0.1), Err(PmpError::Domain(_))));
        assert!((table().cdf(0.25).unwrap() - 0.4).abs() < 1e-15);
        assert!((table().cdf(0.75).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for dist in [TypeDistribution::default(), TypeDistribution::uniform(0.6).unwrap(), table()] {
            for i in 0..=50 {
                let theta = dist.support_end() * i as f64 / 50.0;
                let back = dist.quantile(dist.cdf_at(theta));
                assert!((back - theta).abs() < 1e-14, "{theta} -> {back}");
            }
        }
    }

    #[test]
    fn weighted_mass_values() {
        let u = TypeDistribution::default();
        assert_eq!(u.weighted_mass(0.0, 1.0).unwrap(), 0.5);
        assert!((u.weighted_mass(0.4, 0.8).unwrap() - 0.24).abs() < 1e-15);
        assert_eq!(u.weighted_mass(0.3, 0.3).unwrap(), 0.0);
        assert!(u.weighted_mass(0.5, 0.4).is_err());
        // density 1.6 on [0, 0.5] and 0.4 on [0.5, 1]
        let expected = 1.6 * 0.25 / 2.0 + 0.4 * 0.75 / 2.0;
        assert!((table().weighted_mass(0.0, 1.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn welfare_values() {
        let u = TypeDistribution::default();
        assert_eq!(u.welfare_integral(0.0, 1.0, 2.0, 1.0).unwrap(), 1.5);
        assert_eq!(u.welfare_integral(0.0, 0.5, 2.0, 2.0).unwrap(), 0.75);
        assert_eq!(u.welfare_integral(0.7, 0.7, 2.0, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_malformed_tables() {
        assert!(TypeDistribution::tabulated(vec![(0.0, 0.0), (0.5, 0.5), (0.5, 1.0)]).is_err());
        assert!(TypeDistribution::tabulated(vec![(0.0, 0.1), (1.0, 1.0)]).is_err());
        assert!(TypeDistribution::tabulated(vec![(0.0, 0.0), (1.0, 0.9)]).is_err());
        assert!(TypeDistribution::tabulated(vec![(0.0, 0.0), (0.5, 0.6), (1.0, 0.6)]).is_err());
        assert!(TypeDistribution::uniform(0.0).is_err());
        assert!(TypeDistribution::uniform(1.5).is_err());
    }
}
