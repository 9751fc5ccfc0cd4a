//! Scalar toolkit: truncations, cut-off test functions, exponent formulas and
//! the nonlinearity families σ (boundary absorption) and h (boundary source).

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::problem::ManufacturedData;

/// Distance below which an evaluation at a declared singular point is clamped.
pub const SINGULAR_CLAMP: f64 = 1e-12;

/// Positive truncation height `k` for [`truncate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationLevel(f64);

impl TruncationLevel {
    pub fn new(k: f64) -> Result<Self> {
        if k > 0.0 && !k.is_nan() {
            Ok(Self(k))
        } else {
            Err(Error::invalid(format!("truncation level must be positive, got {k}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `T_k(s) = max(-k, min(s, k))`.
#[inline]
pub fn truncate(s: f64, k: TruncationLevel) -> f64 {
    clamp_sym(s, k.0)
}

#[inline]
pub(crate) fn clamp_sym(s: f64, k: f64) -> f64 {
    s.min(k).max(-k)
}

/// Cut-off equal to 1 below `delta`, 0 above `2 delta`, affine in between.
pub fn v_delta(s: f64, delta: f64) -> f64 {
    debug_assert!(delta > 0.0);
    if s <= delta {
        1.0
    } else if s >= 2.0 * delta {
        0.0
    } else {
        (2.0 * delta - s) / delta
    }
}

/// Ramp equal to 0 below `t`, 1 above `t + eps`, affine in between.
pub fn phi_t_eps(s: f64, t: f64, eps: f64) -> f64 {
    debug_assert!(t > 0.0 && eps > 0.0);
    if s <= t {
        0.0
    } else if s >= t + eps {
        1.0
    } else {
        (s - t) / eps
    }
}

/// Integrability exponent required of the boundary datum `g` in the model
/// problem: `max(2(N-1) / (N + eta (N-2)), 1)`.
pub fn g_integrability_exponent(dim: u32, eta: f64) -> f64 {
    assert!(dim >= 2, "dimension must be at least 2");
    let n = f64::from(dim);
    (2.0 * (n - 1.0) / (n + eta * (n - 2.0))).max(1.0)
}

/// Marcinkiewicz regularity exponents of entropy solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarcinkiewiczExponents {
    /// `N(p-1)/(N-p)`, for `u` in the domain.
    pub interior: f64,
    /// `(N-1)(p-1)/(N-p)`, for the trace of `u`.
    pub boundary: f64,
    /// `N(p-1)/(N-1)`, for `|grad u|`.
    pub gradient: f64,
}

pub fn marcinkiewicz_exponents(dim: u32, p: f64) -> Result<MarcinkiewiczExponents> {
    let n = f64::from(dim);
    if dim < 2 || !(p > 1.0 && p < n) {
        return Err(Error::invalid(format!("p must lie in (1,N): p = {p}, N = {dim}")));
    }
    Ok(MarcinkiewiczExponents {
        interior: n * (p - 1.0) / (n - p),
        boundary: (n - 1.0) * (p - 1.0) / (n - p),
        gradient: n * (p - 1.0) / (n - 1.0),
    })
}

/// Piecewise-linear table, constant extrapolation outside the sampled range.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::invalid("table needs at least two (x, y) samples of equal length"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("table abscissae must be strictly increasing"));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::invalid("table entries must be finite"));
        }
        Ok(Self { xs, ys })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    fn segment(&self, x: f64) -> Option<usize> {
        let last = self.xs.len() - 1;
        if x <= self.xs[0] || x >= self.xs[last] {
            return None;
        }
        Some(self.xs.partition_point(|&xi| xi <= x) - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let last = self.xs.len() - 1;
        match self.segment(x) {
            Some(i) => {
                let t = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
                self.ys[i] + t * (self.ys[i + 1] - self.ys[i])
            }
            None if x <= self.xs[0] => self.ys[0],
            None => self.ys[last],
        }
    }

    /// Slope of the segment containing `x`; at a breakpoint the segment on
    /// the left is used.
    pub fn slope(&self, x: f64) -> f64 {
        let last = self.xs.len() - 1;
        if x <= self.xs[0] || x > self.xs[last] {
            return 0.0;
        }
        let i = self.xs.partition_point(|&xi| xi < x).saturating_sub(1).min(last - 1);
        (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
    }
}

/// Boundary absorption nonlinearity σ.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaFamily {
    /// `scale * s^q`.
    Power { q: f64, scale: f64 },
    /// Tabulated samples on `s >= 0`, linearly interpolated.
    Custom(Table),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSpec {
    pub family: SigmaFamily,
    /// Nondecreasing on `[0, inf)`; required by the uniqueness check.
    pub monotone: bool,
}

impl SigmaSpec {
    pub fn power(q: f64, scale: f64) -> Result<Self> {
        if !(q > 0.0) || !(scale > 0.0) || !q.is_finite() || !scale.is_finite() {
            return Err(Error::invalid(format!(
                "sigma power family needs q > 0 and scale > 0 (sigma(0) = 0), got q = {q}, scale = {scale}"
            )));
        }
        Ok(Self { family: SigmaFamily::Power { q, scale }, monotone: true })
    }

    /// σ(s) = s.
    pub fn identity() -> Self {
        Self { family: SigmaFamily::Power { q: 1.0, scale: 1.0 }, monotone: true }
    }

    pub fn custom(table: Table, monotone: bool) -> Result<Self> {
        if table.xs()[0] != 0.0 || table.ys()[0] != 0.0 {
            return Err(Error::invalid("custom sigma table must start at (0, 0)"));
        }
        if monotone && table.ys().windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("custom sigma flagged monotone but samples decrease"));
        }
        Ok(Self { family: SigmaFamily::Custom(table), monotone })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.family, SigmaFamily::Power { q, scale } if q == 1.0 && scale == 1.0)
    }

    /// σ(s), extended to negative arguments as an odd function.
    pub fn eval(&self, s: f64) -> f64 {
        let a = s.abs();
        let v = match &self.family {
            SigmaFamily::Power { q, scale } => scale * a.powf(*q),
            SigmaFamily::Custom(t) => t.eval(a),
        };
        v.copysign(s)
    }

    pub fn derivative(&self, s: f64) -> f64 {
        let a = s.abs();
        match &self.family {
            SigmaFamily::Power { q, scale } => {
                if *q == 1.0 {
                    *scale
                } else {
                    scale * q * a.max(SINGULAR_CLAMP).powf(q - 1.0)
                }
            }
            SigmaFamily::Custom(t) => t.slope(a.max(f64::MIN_POSITIVE)),
        }
    }

    /// `σ_n(s) = T_n(σ(s))`.
    pub fn truncated(&self, s: f64, n: f64) -> f64 {
        clamp_sym(self.eval(s), n)
    }

    /// Derivative of `σ_n`, taken on the untruncated branch at the kink.
    pub fn truncated_derivative(&self, s: f64, n: f64) -> f64 {
        if self.eval(s).abs() <= n {
            self.derivative(s)
        } else {
            0.0
        }
    }

    /// Samples of `1e3` log-spaced `s` in `[1e-6, 1e6]` where σ(s) < s^{p-1}.
    pub fn lower_bound_violations(&self, p: f64) -> Vec<f64> {
        log_grid(1e-6, 1e6, 1000)
            .into_iter()
            .filter(|&s| self.eval(s) < s.powf(p - 1.0) * (1.0 - 1e-12))
            .collect()
    }

    /// Samples where a monotone-flagged σ decreases; empty when not flagged.
    pub fn monotonicity_violations(&self) -> Vec<f64> {
        if !self.monotone {
            return Vec::new();
        }
        let grid = log_grid(1e-6, 1e6, 1000);
        grid.windows(2).filter(|w| self.eval(w[1]) < self.eval(w[0])).map(|w| w[1]).collect()
    }
}

/// Boundary source nonlinearity h, possibly singular at the origin.
#[derive(Debug, Clone, PartialEq)]
pub enum HFamily {
    /// `c1 * s^{-eta}`.
    PowerSingular,
    /// `h == c1`.
    Bounded,
    /// `c1 / (s^eta + s2)`.
    Rational { s2: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HSpec {
    pub family: HFamily,
    pub eta: f64,
    pub c1: f64,
    /// Threshold below which `h(s) <= c1 / s^eta` must hold.
    pub s1: f64,
    /// Nonincreasing on `(0, inf)`; required by the uniqueness check.
    pub monotone: bool,
}

impl HSpec {
    pub fn power_singular(c1: f64, eta: f64) -> Result<Self> {
        Self::new(HFamily::PowerSingular, eta, c1, 1.0)
    }

    pub fn bounded(c1: f64) -> Result<Self> {
        Self::new(HFamily::Bounded, 0.0, c1, 1.0)
    }

    pub fn rational(c1: f64, eta: f64, s2: f64) -> Result<Self> {
        if !(s2 > 0.0) {
            return Err(Error::invalid(format!("rational h needs s2 > 0, got {s2}")));
        }
        Self::new(HFamily::Rational { s2 }, eta, c1, 1.0)
    }

    pub fn new(family: HFamily, eta: f64, c1: f64, s1: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!("eta must be >= 0, got {eta}")));
        }
        if !(c1 > 0.0) || !(s1 > 0.0) {
            return Err(Error::invalid(format!("h needs c1 > 0 and s1 > 0, got c1 = {c1}, s1 = {s1}")));
        }
        // every built-in family is nonincreasing for eta >= 0
        Ok(Self { family, eta, c1, s1, monotone: true })
    }

    /// Whether `h(s) -> inf` as `s -> 0+`.
    pub fn is_singular(&self) -> bool {
        matches!(self.family, HFamily::PowerSingular) && self.eta > 0.0
    }

    /// `h(s)` for `s > 0`; `+inf` at `s = 0` for singular families.
    pub fn eval(&self, s: f64) -> f64 {
        match self.family {
            HFamily::PowerSingular => {
                if self.eta == 0.0 {
                    self.c1
                } else {
                    self.c1 / s.powf(self.eta)
                }
            }
            HFamily::Bounded => self.c1,
            HFamily::Rational { s2 } => self.c1 / (s.powf(self.eta) + s2),
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self.family {
            HFamily::PowerSingular if self.eta > 0.0 => -self.eta * self.c1 / s.powf(self.eta + 1.0),
            HFamily::PowerSingular | HFamily::Bounded => 0.0,
            HFamily::Rational { s2 } => {
                if self.eta == 0.0 {
                    return 0.0;
                }
                let d = s.powf(self.eta) + s2;
                -self.c1 * self.eta * s.powf(self.eta - 1.0) / (d * d)
            }
        }
    }

    /// `h_n(s) = T_n(h(s))` for `s >= 0`, with `h_n(0) = n` when `h(0) = inf`.
    pub fn truncated(&self, s: f64, n: f64) -> Result<f64> {
        if s < 0.0 && self.is_singular() {
            return Err(Error::invalid(format!("singular h evaluated at negative argument {s}")));
        }
        Ok(self.truncated_abs(s, n))
    }

    /// `h_n(|s|)`; the form used inside level-n problems.
    pub fn truncated_abs(&self, s: f64, n: f64) -> f64 {
        let a = s.abs();
        if a == 0.0 && self.is_singular() {
            return n;
        }
        clamp_sym(self.eval(a), n)
    }

    /// Derivative in `s` of `h_n(|s|)`, on the untruncated branch at the kink.
    pub fn truncated_abs_derivative(&self, s: f64, n: f64) -> f64 {
        let a = s.abs();
        if a == 0.0 || self.eval(a) > n {
            return 0.0;
        }
        self.derivative(a) * s.signum()
    }

    /// Samples on `(0, s1]` where `h(s) > c1 / s^eta`.
    pub fn growth_violations(&self) -> Vec<f64> {
        log_grid(1e-6 * self.s1, self.s1, 1000)
            .into_iter()
            .filter(|&s| self.eval(s) > self.c1 / s.powf(self.eta) * (1.0 + 1e-12))
            .collect()
    }

    /// Whether h stays bounded at large arguments (sampled on `[1e3, 1e9]`).
    pub fn bounded_at_infinity(&self) -> bool {
        log_grid(1e3, 1e9, 50).into_iter().all(|s| self.eval(s).is_finite() && self.eval(s) <= self.eval(1e3).max(self.c1) + 1.0)
    }
}

/// `count` log-spaced points spanning `[lo, hi]`, endpoints exact.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && count >= 1);
    if count == 1 || lo == hi {
        return vec![lo; count.max(1)];
    }
    let ratio = (hi / lo).ln();
    (0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == count - 1 {
                hi
            } else {
                lo * (ratio * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

/// Location at which a data field is evaluated. Boundary points carry the
/// outward normal of the edge they lie on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub x: f64,
    pub y: f64,
    pub normal: Option<[f64; 2]>,
}

impl EvalPoint {
    pub fn interior(x: f64, y: f64) -> Self {
        Self { x, y, normal: None }
    }

    pub fn boundary(x: f64, y: f64, normal: [f64; 2]) -> Self {
        Self { x, y, normal: Some(normal) }
    }

    /// Polar angle in `(-pi, pi]`.
    pub fn theta(&self) -> f64 {
        polar_angle(self.x, self.y)
    }
}

pub fn polar_angle(x: f64, y: f64) -> f64 {
    let t = y.atan2(x);
    if t <= -PI {
        PI
    } else {
        t
    }
}

/// Wrap an angle difference into `(-pi, pi]`.
pub fn wrap_angle(t: f64) -> f64 {
    let mut w = t % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Data fields (f in the domain, λ and g on the boundary), as closed
/// parametric families.
#[derive(Debug, Clone, PartialEq)]
pub enum DataField {
    Constant(f64),
    /// `scale * |theta - center|^{-alpha}`, angle difference wrapped.
    AngularPower { scale: f64, alpha: f64, center: f64 },
    /// `scale * |x - x0|^{-exponent}`.
    PointPower { scale: f64, exponent: f64, x0: f64, y0: f64 },
    /// `sin^2(theta) (1 + |theta|^{-alpha})`, the boundary datum of the
    /// sign-changing disk example.
    DiskExampleG { alpha: f64 },
    /// Samples over the polar angle, linearly interpolated.
    AngularTable(Table),
    /// `T_k` applied to another field.
    Truncated { inner: Box<DataField>, level: f64 },
    /// Load or boundary datum derived from an exact solution.
    Manufactured(Arc<ManufacturedData>),
}

impl DataField {
    pub fn eval(&self, pt: &EvalPoint) -> f64 {
        match self {
            DataField::Constant(c) => *c,
            DataField::AngularPower { scale, alpha, center } => {
                let d = wrap_angle(pt.theta() - center).abs().max(SINGULAR_CLAMP);
                scale * d.powf(-alpha)
            }
            DataField::PointPower { scale, exponent, x0, y0 } => {
                let d = (pt.x - x0).hypot(pt.y - y0).max(SINGULAR_CLAMP);
                scale * d.powf(-exponent)
            }
            DataField::DiskExampleG { alpha } => {
                let theta = pt.theta();
                let s = theta.sin();
                s * s * (1.0 + theta.abs().max(SINGULAR_CLAMP).powf(-alpha))
            }
            DataField::AngularTable(t) => t.eval(pt.theta()),
            DataField::Truncated { inner, level } => clamp_sym(inner.eval(pt), *level),
            DataField::Manufactured(m) => m.eval(pt),
        }
    }

    /// Known finite upper bound, when the family has one.
    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            DataField::Constant(c) => Some(c.abs()),
            DataField::AngularPower { scale, alpha, .. } => (*alpha <= 0.0).then(|| scale * PI.powf(-alpha)),
            DataField::PointPower { .. } => None,
            DataField::DiskExampleG { alpha } => (*alpha == 0.0).then_some(2.0),
            DataField::AngularTable(t) => Some(t.ys().iter().fold(0.0_f64, |m, v| m.max(v.abs()))),
            DataField::Truncated { inner, level } => Some(inner.sup_bound().map_or(*level, |b| b.min(*level))),
            DataField::Manufactured(_) => None,
        }
    }

    /// Whether the family may be unbounded (used to gate the barrier).
    pub fn is_singular(&self) -> bool {
        match self {
            DataField::AngularPower { alpha, .. } => *alpha > 0.0,
            DataField::PointPower { exponent, .. } => *exponent > 0.0,
            DataField::DiskExampleG { alpha } => *alpha > 0.0,
            DataField::Truncated { .. } => false,
            DataField::Constant(_) | DataField::AngularTable(_) | DataField::Manufactured(_) => false,
        }
    }

    pub fn truncated_at(&self, pt: &EvalPoint, n: f64) -> f64 {
        clamp_sym(self.eval(pt), n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn k(v: f64) -> TruncationLevel {
        TruncationLevel::new(v).unwrap()
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate(7.0, k(5.0)), 5.0);
        assert_eq!(truncate(-7.0, k(5.0)), -5.0);
        assert_eq!(truncate(3.0, k(5.0)), 3.0);
        assert!(TruncationLevel::new(0.0).is_err());
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(v_delta(0.5, 1.0), 1.0);
        assert_eq!(v_delta(1.5, 1.0), 0.5);
        assert_eq!(v_delta(3.0, 1.0), 0.0);
        assert_eq!(phi_t_eps(1.0, 2.0, 1.0), 0.0);
        assert_eq!(phi_t_eps(2.5, 2.0, 1.0), 0.5);
        assert_eq!(phi_t_eps(4.0, 2.0, 1.0), 1.0);
    }

    #[test]
    fn exponent_examples() {
        assert_relative_eq!(g_integrability_exponent(3, 0.0), 4.0 / 3.0, epsilon = 1e-15);
        assert_eq!(g_integrability_exponent(3, 1.0), 1.0);
        assert_eq!(g_integrability_exponent(2, 7.0), 1.0);

        let e = marcinkiewicz_exponents(3, 2.0).unwrap();
        assert_relative_eq!(e.interior, 3.0);
        assert_relative_eq!(e.boundary, 2.0);
        assert_relative_eq!(e.gradient, 1.5);
        let e = marcinkiewicz_exponents(2, 1.5).unwrap();
        assert_relative_eq!(e.interior, 2.0);
        assert_relative_eq!(e.boundary, 1.0);
        assert_relative_eq!(e.gradient, 1.0);
        let err = marcinkiewicz_exponents(2, 2.0).unwrap_err();
        assert!(err.to_string().contains("p must lie in (1,N)"));
    }

    #[test]
    fn truncated_nonlinearities() {
        let sigma = SigmaSpec::identity();
        assert_eq!(sigma.truncated(5.0, 3.0), 3.0);
        let h = HSpec::power_singular(1.0, 1.0).unwrap();
        assert_eq!(h.truncated(0.1, 4.0).unwrap(), 4.0);
        assert_eq!(h.truncated(2.0, 4.0).unwrap(), 0.5);
        assert_eq!(h.truncated(0.0, 4.0).unwrap(), 4.0);
        assert!(h.truncated(-1.0, 4.0).is_err());
    }

    #[test]
    fn configured_sigmas_dominate_power() {
        for (sigma, p) in [
            (SigmaSpec::identity(), 2.0),
            (SigmaSpec::power(0.5, 1.0).unwrap(), 1.5),
            (SigmaSpec::power(2.0, 1.0).unwrap(), 3.0),
        ] {
            assert!(sigma.lower_bound_violations(p).is_empty());
            assert!(sigma.monotonicity_violations().is_empty());
        }
        // s alone is below s^{1/2} on (0, 1)
        assert!(!SigmaSpec::identity().lower_bound_violations(1.5).is_empty());
    }

    #[test]
    fn custom_sigma_table() {
        let t = Table::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 4.0]).unwrap();
        let s = SigmaSpec::custom(t, true).unwrap();
        assert_eq!(s.eval(0.5), 0.5);
        assert_eq!(s.eval(1.5), 2.5);
        assert_eq!(s.eval(-1.5), -2.5);
        assert_eq!(s.derivative(1.0), 1.0);
        assert_eq!(s.derivative(1.2), 3.0);
        let bad = Table::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 1.0]).unwrap();
        assert!(SigmaSpec::custom(bad.clone(), true).is_err());
        assert!(SigmaSpec::custom(bad, false).unwrap().monotonicity_violations().is_empty());
    }

    #[test]
    fn h_families_satisfy_growth() {
        for h in [
            HSpec::power_singular(1.0, 1.0).unwrap(),
            HSpec::power_singular(2.0, 0.5).unwrap(),
            HSpec::bounded(3.0).unwrap(),
            HSpec::rational(1.0, 2.0, 0.5).unwrap(),
        ] {
            assert!(h.growth_violations().is_empty(), "{h:?}");
            assert!(h.bounded_at_infinity());
        }
    }

    #[test]
    fn h_derivative_matches_difference() {
        let h = HSpec::rational(1.5, 2.0, 0.3).unwrap();
        for s in [0.2, 0.7, 1.9] {
            let fd = (h.eval(s + 1e-7) - h.eval(s - 1e-7)) / 2e-7;
            assert_relative_eq!(h.derivative(s), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn data_families() {
        let lam = DataField::AngularPower { scale: 1.0, alpha: 0.5, center: 0.0 };
        let pt = EvalPoint::boundary(0.0, 1.0, [0.0, 1.0]);
        assert_relative_eq!(lam.eval(&pt), (PI / 2.0).powf(-0.5), epsilon = 1e-14);
        let at_zero = EvalPoint::boundary(1.0, 0.0, [1.0, 0.0]);
        assert_relative_eq!(lam.eval(&at_zero), 1e6, max_relative = 1e-12);
        assert_eq!(DataField::Constant(3.0).truncated_at(&pt, 2.0), 2.0);
        let g = DataField::DiskExampleG { alpha: 0.0 };
        assert_relative_eq!(g.eval(&pt), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.5, 8.0, 5);
        assert_eq!(g[0], 0.5);
        assert_eq!(g[4], 8.0);
        assert_relative_eq!(g[2], 2.0, epsilon = 1e-14);
    }

    proptest! {
        #[test]
        fn truncate_is_odd_and_lipschitz(a in -1e3..1e3f64, b in -1e3..1e3f64, kk in 1e-3..1e2f64) {
            let lvl = k(kk);
            prop_assert_eq!(truncate(-a, lvl), -truncate(a, lvl));
            prop_assert!((truncate(a, lvl) - truncate(b, lvl)).abs() <= (a - b).abs() + 1e-12);
            prop_assert!(truncate(a, lvl).abs() <= kk);
        }

        #[test]
        fn cutoffs_are_lipschitz(a in -10.0..10.0f64, b in -10.0..10.0f64, d in 0.01..5.0f64, t in 0.01..5.0f64) {
            prop_assert!((v_delta(a, d) - v_delta(b, d)).abs() <= (a - b).abs() / d + 1e-12);
            prop_assert!((phi_t_eps(a, t, d) - phi_t_eps(b, t, d)).abs() <= (a - b).abs() / d + 1e-12);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(phi_t_eps(lo, t, d) <= phi_t_eps(hi, t, d));
            prop_assert!((0.0..=1.0).contains(&v_delta(a, d)));
        }

        #[test]
        fn planar_exponent_is_one(eta in 0.0..50.0f64) {
            prop_assert_eq!(g_integrability_exponent(2, eta), 1.0);
        }

        #[test]
        fn truncated_h_is_capped(s in 1e-9..1e3f64, n in 1.0..1e4f64) {
            let h = HSpec::power_singular(1.0, 1.5).unwrap();
            let hn = h.truncated(s, n).unwrap();
            prop_assert!(hn <= n);
            if h.eval(s) <= n {
                prop_assert_eq!(hn, h.eval(s));
            }
        }
    }
}
