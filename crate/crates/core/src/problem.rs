//! Problem instances, their level-n regularizations, manufactured solutions
//! and the sign-changing disk example.

use std::sync::Arc;

use rand::Rng;

use crate::assembly;
use crate::error::{Error, Result};
use crate::functions::{DataField, EvalPoint, HFamily, HSpec, SigmaSpec};
use crate::mesh::{edge_points, DiscreteField, Mesh2D};
use crate::quadrature::{triangle_rule, GaussLegendre};
use crate::sparse::Pattern;

/// Default order of the boundary Gauss rule.
pub const DEFAULT_BOUNDARY_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxFamily {
    /// `a(x, ξ) = |ξ|^{p-2} ξ`.
    PLaplacian,
    /// `a(x, ξ) = ω(x) |ξ|^{p-2} ξ` with `ω_min <= ω < ω_max`.
    Weighted { omega_min: f64, omega_max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxSpec {
    pub family: FluxFamily,
    pub p: f64,
}

/// Outcome of sampling the structure conditions of a flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureCheck {
    pub samples: usize,
    pub coercivity_violations: usize,
    pub growth_violations: usize,
    pub monotonicity_violations: usize,
}

impl StructureCheck {
    pub fn passed(&self) -> bool {
        self.coercivity_violations == 0 && self.growth_violations == 0 && self.monotonicity_violations == 0
    }
}

impl FluxSpec {
    pub fn p_laplacian(p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::invalid(format!("flux exponent must exceed 1, got {p}")));
        }
        Ok(Self { family: FluxFamily::PLaplacian, p })
    }

    pub fn weighted(p: f64, omega_min: f64, omega_max: f64) -> Result<Self> {
        Self::p_laplacian(p)?;
        if !(omega_min > 0.0) || !(omega_max >= omega_min) {
            return Err(Error::invalid(format!(
                "weight bounds need 0 < omega_min <= omega_max, got [{omega_min}, {omega_max}]"
            )));
        }
        Ok(Self { family: FluxFamily::Weighted { omega_min, omega_max }, p })
    }

    pub fn laplacian() -> Self {
        Self { family: FluxFamily::PLaplacian, p: 2.0 }
    }

    pub fn weight(&self, x: f64, y: f64) -> f64 {
        match self.family {
            FluxFamily::PLaplacian => 1.0,
            FluxFamily::Weighted { omega_min, omega_max } => {
                let r = x * x + y * y;
                omega_min + (omega_max - omega_min) * r / (1.0 + r)
            }
        }
    }

    pub fn weight_gradient(&self, x: f64, y: f64) -> [f64; 2] {
        match self.family {
            FluxFamily::PLaplacian => [0.0, 0.0],
            FluxFamily::Weighted { omega_min, omega_max } => {
                let r = x * x + y * y;
                let d = (omega_max - omega_min) / ((1.0 + r) * (1.0 + r));
                [2.0 * x * d, 2.0 * y * d]
            }
        }
    }

    /// `α` with `a(x,ξ)·ξ >= α |ξ|^p`.
    pub fn coercivity(&self) -> f64 {
        match self.family {
            FluxFamily::PLaplacian => 1.0,
            FluxFamily::Weighted { omega_min, .. } => omega_min.min(1.0),
        }
    }

    /// `β` with `|a(x,ξ)| <= β |ξ|^{p-1}`.
    pub fn growth(&self) -> f64 {
        match self.family {
            FluxFamily::PLaplacian => 1.0,
            FluxFamily::Weighted { omega_max, .. } => omega_max.max(1.0),
        }
    }

    pub fn flux(&self, x: f64, y: f64, xi: [f64; 2]) -> [f64; 2] {
        let w = self.weight(x, y) * power_factor(xi, self.p);
        [w * xi[0], w * xi[1]]
    }

    /// Sample the coercivity, growth and strict monotonicity conditions at
    /// random points of the unit box and random gradients.
    pub fn check_structure<R: Rng>(&self, rng: &mut R, samples: usize) -> StructureCheck {
        let mut out = StructureCheck { samples, coercivity_violations: 0, growth_violations: 0, monotonicity_violations: 0 };
        let (alpha, beta) = (self.coercivity(), self.growth());
        for _ in 0..samples {
            let (x, y) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let scale = 10f64.powf(rng.random_range(-3.0..3.0));
            let xi = [scale * rng.random_range(-1.0..1.0), scale * rng.random_range(-1.0..1.0)];
            let xj = [scale * rng.random_range(-1.0..1.0), scale * rng.random_range(-1.0..1.0)];
            let a = self.flux(x, y, xi);
            let norm = xi[0].hypot(xi[1]);
            if a[0] * xi[0] + a[1] * xi[1] < alpha * norm.powf(self.p) * (1.0 - 1e-12) {
                out.coercivity_violations += 1;
            }
            if a[0].hypot(a[1]) > beta * norm.powf(self.p - 1.0) * (1.0 + 1e-12) {
                out.growth_violations += 1;
            }
            let b = self.flux(x, y, xj);
            if xi != xj && (a[0] - b[0]) * (xi[0] - xj[0]) + (a[1] - b[1]) * (xi[1] - xj[1]) <= 0.0 {
                out.monotonicity_violations += 1;
            }
        }
        out
    }
}

/// `|ξ|^{p-2}`, with the convention `0` at `ξ = 0` for `p < 2`.
#[inline]
pub(crate) fn power_factor(xi: [f64; 2], p: f64) -> f64 {
    if p == 2.0 {
        return 1.0;
    }
    let n2 = xi[0] * xi[0] + xi[1] * xi[1];
    if n2 == 0.0 {
        0.0
    } else {
        n2.powf(0.5 * (p - 2.0))
    }
}

/// Smooth exact solutions used to manufacture data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactSolution {
    /// `c0 + cx x + cy y`.
    Affine { c0: f64, cx: f64, cy: f64 },
    /// `c0 + cxx x^2 + cyy y^2`.
    Quadratic { c0: f64, cxx: f64, cyy: f64 },
    /// `c0 + amp sin(πx) sin(πy)`.
    SinProduct { c0: f64, amp: f64 },
}

impl ExactSolution {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        use std::f64::consts::PI;
        match *self {
            ExactSolution::Affine { c0, cx, cy } => c0 + cx * x + cy * y,
            ExactSolution::Quadratic { c0, cxx, cyy } => c0 + cxx * x * x + cyy * y * y,
            ExactSolution::SinProduct { c0, amp } => c0 + amp * (PI * x).sin() * (PI * y).sin(),
        }
    }

    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        use std::f64::consts::PI;
        match *self {
            ExactSolution::Affine { cx, cy, .. } => [cx, cy],
            ExactSolution::Quadratic { cxx, cyy, .. } => [2.0 * cxx * x, 2.0 * cyy * y],
            ExactSolution::SinProduct { amp, .. } => [
                amp * PI * (PI * x).cos() * (PI * y).sin(),
                amp * PI * (PI * x).sin() * (PI * y).cos(),
            ],
        }
    }

    /// `[[u_xx, u_xy], [u_xy, u_yy]]`.
    pub fn hessian(&self, x: f64, y: f64) -> [[f64; 2]; 2] {
        use std::f64::consts::PI;
        match *self {
            ExactSolution::Affine { .. } => [[0.0; 2]; 2],
            ExactSolution::Quadratic { cxx, cyy, .. } => [[2.0 * cxx, 0.0], [0.0, 2.0 * cyy]],
            ExactSolution::SinProduct { amp, .. } => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                let k = amp * PI * PI;
                [[-k * sx * sy, k * cx * cy], [k * cx * cy, -k * sx * sy]]
            }
        }
    }

    /// `-div a(x, ∇u)` for the given flux family.
    pub fn load(&self, flux: &FluxSpec, x: f64, y: f64) -> f64 {
        let g = self.gradient(x, y);
        let h = self.hessian(x, y);
        let p = flux.p;
        let n2 = g[0] * g[0] + g[1] * g[1];
        let lap = h[0][0] + h[1][1];
        let div_inner = if p == 2.0 {
            lap
        } else if n2 == 0.0 {
            // the power term is not differentiable here; only p >= 2 with a
            // vanishing Hessian contribution is meaningful
            0.0
        } else {
            let hgg = g[0] * (h[0][0] * g[0] + h[0][1] * g[1]) + g[1] * (h[1][0] * g[0] + h[1][1] * g[1]);
            n2.powf(0.5 * (p - 2.0)) * (lap + (p - 2.0) * hgg / n2)
        };
        let w = flux.weight(x, y);
        let dw = flux.weight_gradient(x, y);
        let pf = power_factor(g, p);
        -(w * div_inner + pf * (dw[0] * g[0] + dw[1] * g[1]))
    }
}

/// Data derived from an exact solution.
#[derive(Debug, Clone, PartialEq)]
pub enum ManufacturedData {
    /// Interior load `-div a(x, ∇u)`.
    Load { exact: ExactSolution, flux: FluxSpec },
    /// Boundary datum `g = (a(x,∇u)·ν + λ σ(u)) / h(u)`.
    BoundarySource { exact: ExactSolution, flux: FluxSpec, lambda: DataField, sigma: SigmaSpec, h: HSpec },
}

impl ManufacturedData {
    pub fn eval(&self, pt: &EvalPoint) -> f64 {
        match self {
            ManufacturedData::Load { exact, flux } => exact.load(flux, pt.x, pt.y),
            ManufacturedData::BoundarySource { exact, flux, lambda, sigma, h } => {
                let Some(nu) = pt.normal else { return f64::NAN };
                let a = flux.flux(pt.x, pt.y, exact.gradient(pt.x, pt.y));
                let u = exact.value(pt.x, pt.y);
                let raw = (a[0] * nu[0] + a[1] * nu[1] + lambda.eval(pt) * sigma.eval(u)) / h.eval(u);
                // round-off below zero is absorbed; genuine sign violations are
                // rejected by `manufacture`
                if raw < 0.0 && raw > -1e-12 {
                    0.0
                } else {
                    raw
                }
            }
        }
    }

    fn raw_boundary(&self, pt: &EvalPoint) -> f64 {
        match self {
            ManufacturedData::BoundarySource { exact, flux, lambda, sigma, h } => {
                let nu = pt.normal.unwrap_or([0.0, 0.0]);
                let a = flux.flux(pt.x, pt.y, exact.gradient(pt.x, pt.y));
                let u = exact.value(pt.x, pt.y);
                (a[0] * nu[0] + a[1] * nu[1] + lambda.eval(pt) * sigma.eval(u)) / h.eval(u)
            }
            ManufacturedData::Load { .. } => self.eval(pt),
        }
    }
}

/// How the level-n problems regularize the boundary terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularization {
    /// Linear absorption `λ_n u` and source `g_n c1 / (|u| + 1/n)^η`
    /// (requires `p = 2` and a power-singular h).
    Model,
    /// `λ_n σ_n(u)` and `h_n(|u|) g_n` with `σ_n = T_n∘σ`, `h_n = T_n∘h`.
    General,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub mesh: Arc<Mesh2D>,
    pub flux: FluxSpec,
    pub f: DataField,
    pub lambda: DataField,
    pub g: DataField,
    pub sigma: SigmaSpec,
    pub h: HSpec,
    /// Dimension entering the exponent formulas (meshes are planar).
    pub dimension: u32,
    pub regularization: Regularization,
    pub boundary_order: usize,
    /// Set for instances with sign-changing solutions; such specs feed the
    /// residual evaluator only.
    pub sign_changing: bool,
}

impl ProblemSpec {
    /// A spec with `σ(s) = s`, `h(s) = s^{-η}`, Laplacian flux and the
    /// given data, in model regularization.
    pub fn model(mesh: Arc<Mesh2D>, f: DataField, lambda: DataField, g: DataField, eta: f64) -> Result<Self> {
        let spec = Self {
            mesh,
            flux: FluxSpec::laplacian(),
            f,
            lambda,
            g,
            sigma: SigmaSpec::identity(),
            h: HSpec::power_singular(1.0, eta)?,
            dimension: 2,
            regularization: Regularization::Model,
            boundary_order: DEFAULT_BOUNDARY_ORDER,
            sign_changing: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn eta(&self) -> f64 {
        self.h.eta
    }

    /// Check data signs at every quadrature point, `∮ λ > 0` and the
    /// requirements of the chosen regularization.
    pub fn validate(&self) -> Result<()> {
        if self.regularization == Regularization::Model {
            if self.flux.p != 2.0 || self.flux.family != FluxFamily::PLaplacian {
                return Err(Error::invalid("model regularization requires the Laplacian flux (p = 2)"));
            }
            if self.h.family != HFamily::PowerSingular {
                return Err(Error::invalid("model regularization requires a power-singular h"));
            }
        }
        if self.dimension < 2 {
            return Err(Error::invalid("dimension must be at least 2"));
        }
        GaussLegendre::new(self.boundary_order)?;
        if !self.sign_changing {
            for (x, _) in interior_points(&self.mesh) {
                let v = self.f.eval(&x);
                if !(v >= 0.0) {
                    return Err(Error::invalid(format!("f = {v} < 0 at ({:.6}, {:.6})", x.x, x.y)));
                }
            }
        }
        let mut lambda_mass = 0.0;
        for (pt, w) in boundary_points(&self.mesh, self.boundary_order)? {
            let l = self.lambda.eval(&pt);
            let g = self.g.eval(&pt);
            if !(l >= 0.0) || !(g >= 0.0) {
                return Err(Error::invalid(format!(
                    "boundary data must be nonnegative: lambda = {l}, g = {g} at ({:.6}, {:.6})",
                    pt.x, pt.y
                )));
            }
            lambda_mass += w * l;
        }
        if !(lambda_mass > 0.0) {
            return Err(Error::invalid("lambda vanishes identically on the boundary"));
        }
        Ok(())
    }

    /// Max of λ over boundary quadrature points (surrogate for the sup norm).
    pub fn lambda_sup(&self) -> f64 {
        boundary_points(&self.mesh, self.boundary_order)
            .map(|pts| pts.iter().map(|(p, _)| self.lambda.eval(p)).fold(0.0, f64::max))
            .unwrap_or(0.0)
    }

    /// `max(1, sup f_n, sup λ_n, sup g_n)` over quadrature points.
    pub fn data_scale(&self, level: f64) -> f64 {
        let mut s = 1.0_f64;
        for (x, _) in interior_points(&self.mesh) {
            s = s.max(self.f.truncated_at(&x, level));
        }
        if let Ok(pts) = boundary_points(&self.mesh, self.boundary_order) {
            for (p, _) in pts {
                s = s.max(self.lambda.truncated_at(&p, level)).max(self.g.truncated_at(&p, level));
            }
        }
        s
    }
}

pub(crate) fn interior_points(mesh: &Mesh2D) -> Vec<(EvalPoint, f64)> {
    let rule = triangle_rule();
    let mut out = Vec::with_capacity(7 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.geometry(t).area;
        let v = tri.map(|i| mesh.vertices()[i]);
        for (l, w) in &rule {
            let x = l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0];
            let y = l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1];
            out.push((EvalPoint::interior(x, y), w * area));
        }
    }
    out
}

pub(crate) fn boundary_points(mesh: &Mesh2D, order: usize) -> Result<Vec<(EvalPoint, f64)>> {
    let rule = GaussLegendre::new(order)?;
    Ok(mesh
        .boundary_edges()
        .iter()
        .flat_map(|e| {
            edge_points(mesh.vertices(), e, &rule)
                .into_iter()
                .map(move |p| (Mesh2D::boundary_eval_point(e, &p), p.weight))
        })
        .collect())
}

/// A problem with all data and nonlinearities truncated at level `n`, and
/// its level-dependent integrals against the hat functions.
#[derive(Debug, Clone)]
pub struct RegularizedProblem {
    spec: ProblemSpec,
    level: f64,
    /// `∫ f_n φ_i`.
    pub load: Vec<f64>,
    /// `∮ λ_n φ_i`.
    pub absorption_weight: Vec<f64>,
    /// `∮ g_n φ_i`.
    pub source_weight: Vec<f64>,
    /// Flux weight at triangle centroids.
    pub omega: Vec<f64>,
    pub(crate) pattern: Arc<Pattern>,
}

/// Truncate every datum and nonlinearity at level `n`.
pub fn regularize(spec: &ProblemSpec, n: u64) -> Result<RegularizedProblem> {
    if n == 0 {
        return Err(Error::invalid("regularization level must be >= 1"));
    }
    regularize_at(spec, n as f64, None)
}

pub(crate) fn regularize_at(spec: &ProblemSpec, level: f64, pattern: Option<Arc<Pattern>>) -> Result<RegularizedProblem> {
    let mesh = &spec.mesh;
    let exec = crate::exec::Exec::default();
    let load = assembly::load_vector(mesh, |p| spec.f.truncated_at(p, level), exec);
    let absorption_weight = assembly::boundary_weights(mesh, spec.boundary_order, |p| spec.lambda.truncated_at(p, level))?;
    let source_weight = assembly::boundary_weights(mesh, spec.boundary_order, |p| spec.g.truncated_at(p, level))?;
    let omega = (0..mesh.num_triangles())
        .map(|t| {
            let tri = mesh.triangles()[t];
            let c = tri.iter().fold([0.0, 0.0], |acc, &v| {
                [acc[0] + mesh.vertices()[v][0] / 3.0, acc[1] + mesh.vertices()[v][1] / 3.0]
            });
            spec.flux.weight(c[0], c[1])
        })
        .collect();
    let pattern = pattern.unwrap_or_else(|| Arc::new(Pattern::from_mesh(mesh)));
    Ok(RegularizedProblem { spec: spec.clone(), level, load, absorption_weight, source_weight, omega, pattern })
}

impl RegularizedProblem {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn mesh(&self) -> &Arc<Mesh2D> {
        &self.spec.mesh
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// Same problem at another level, reusing the sparsity pattern.
    pub fn at_level(&self, n: u64) -> Result<RegularizedProblem> {
        regularize_at(&self.spec, n as f64, Some(self.pattern.clone()))
    }

    pub fn f_n(&self, pt: &EvalPoint) -> f64 {
        self.spec.f.truncated_at(pt, self.level)
    }

    pub fn lambda_n(&self, pt: &EvalPoint) -> f64 {
        self.spec.lambda.truncated_at(pt, self.level)
    }

    pub fn g_n(&self, pt: &EvalPoint) -> f64 {
        self.spec.g.truncated_at(pt, self.level)
    }

    /// Absorption nonlinearity of this level.
    pub fn absorption(&self, s: f64) -> f64 {
        match self.spec.regularization {
            Regularization::Model => s,
            Regularization::General => self.spec.sigma.truncated(s, self.level),
        }
    }

    pub fn absorption_derivative(&self, s: f64) -> f64 {
        match self.spec.regularization {
            Regularization::Model => 1.0,
            Regularization::General => self.spec.sigma.truncated_derivative(s, self.level),
        }
    }

    /// Source factor multiplying `g_n`: `c1 / (|s| + 1/n)^η` in model
    /// mode, `h_n(|s|)` otherwise.
    pub fn source(&self, s: f64) -> f64 {
        match self.spec.regularization {
            Regularization::Model => {
                let h = &self.spec.h;
                if h.eta == 0.0 {
                    h.c1
                } else {
                    h.c1 / (s.abs() + 1.0 / self.level).powf(h.eta)
                }
            }
            Regularization::General => self.spec.h.truncated_abs(s, self.level),
        }
    }

    pub fn source_derivative(&self, s: f64) -> f64 {
        match self.spec.regularization {
            Regularization::Model => {
                let h = &self.spec.h;
                if h.eta == 0.0 || s == 0.0 {
                    0.0
                } else {
                    -h.eta * h.c1 * s.signum() / (s.abs() + 1.0 / self.level).powf(h.eta + 1.0)
                }
            }
            Regularization::General => self.spec.h.truncated_abs_derivative(s, self.level),
        }
    }

    /// `(most absorption, least supply)` when the level has no solution:
    /// `σ_n <= n` caps the boundary absorption, while the load and, for
    /// `η = 0`, the non-decaying source supply more than that cap. Summing
    /// the equations (the mass balance) rules out every candidate.
    pub fn supply_exceeds_absorption(&self) -> Option<(f64, f64)> {
        if self.spec.regularization == Regularization::Model {
            return None;
        }
        let most = self.level * self.absorption_weight.iter().sum::<f64>();
        let h_inf = if self.spec.h.eta == 0.0 { self.source(1.0) } else { 0.0 };
        let least = self.load.iter().sum::<f64>() + h_inf * self.source_weight.iter().sum::<f64>();
        (least > most * (1.0 + 1e-12)).then_some((most, least))
    }

    /// Whether the absorption is linear, making the Schauder map a single
    /// linear solve for `p = 2`.
    pub fn is_linear_absorption(&self) -> bool {
        self.spec.regularization == Regularization::Model || self.spec.sigma.is_identity()
    }

    /// Whether the tangent is known to be symmetric positive definite.
    pub fn tangent_is_spd(&self) -> bool {
        self.spec.sigma.monotone && self.spec.h.monotone
    }
}

/// Build the data of a problem whose solution is `exact`:
/// `f = -div a(x, ∇u)` and `g = (a(x,∇u)·ν + λσ(u)) / h(u)`.
pub fn manufacture(
    exact: ExactSolution,
    lambda: DataField,
    sigma: SigmaSpec,
    h: HSpec,
    flux: FluxSpec,
    mesh: Arc<Mesh2D>,
    regularization: Regularization,
) -> Result<ProblemSpec> {
    let sigma = match regularization {
        Regularization::Model => SigmaSpec::identity(),
        Regularization::General => sigma,
    };
    let boundary = ManufacturedData::BoundarySource { exact, flux, lambda: lambda.clone(), sigma: sigma.clone(), h: h.clone() };
    for (pt, _) in boundary_points(&mesh, DEFAULT_BOUNDARY_ORDER)? {
        let u = exact.value(pt.x, pt.y);
        if !(u > 0.0) {
            return Err(Error::invalid(format!("exact solution must be positive on the boundary, got {u}")));
        }
        let g = boundary.raw_boundary(&pt);
        if !(g >= -1e-12) {
            return Err(Error::invalid(format!(
                "manufactured g = {g:.3e} < 0 at ({:.6}, {:.6}): sign violation",
                pt.x, pt.y
            )));
        }
    }
    let load = ManufacturedData::Load { exact, flux };
    let spec = ProblemSpec {
        mesh,
        flux,
        f: DataField::Manufactured(Arc::new(load)),
        lambda,
        g: DataField::Manufactured(Arc::new(boundary)),
        sigma,
        h,
        dimension: 2,
        regularization,
        boundary_order: DEFAULT_BOUNDARY_ORDER,
        sign_changing: false,
    };
    spec.validate()?;
    Ok(spec)
}

/// Harmonic `u = r sin θ` on the unit disk with `λ(θ) = |θ|^{-α}`,
/// `g(θ) = sin²θ (1 + |θ|^{-α})` and `η = 1`. The spec is flagged
/// sign-changing: it is a residual-evaluation fixture, not solver input.
pub fn exact_disk_example(alpha: f64, mesh: Arc<Mesh2D>) -> Result<(ProblemSpec, DiscreteField)> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid(format!("disk example needs 0 <= alpha < 1 (lambda in L1), got {alpha}")));
    }
    let spec = ProblemSpec {
        mesh: mesh.clone(),
        flux: FluxSpec::laplacian(),
        f: DataField::Constant(0.0),
        lambda: DataField::AngularPower { scale: 1.0, alpha, center: 0.0 },
        g: DataField::DiskExampleG { alpha },
        sigma: SigmaSpec::identity(),
        h: HSpec::power_singular(1.0, 1.0)?,
        dimension: 2,
        regularization: Regularization::Model,
        boundary_order: DEFAULT_BOUNDARY_ORDER,
        sign_changing: true,
    };
    spec.validate()?;
    let u = DiscreteField::interpolate(mesh, |x, y| {
        let r = x.hypot(y);
        r * crate::functions::polar_angle(x, y).sin()
    });
    Ok((spec, u))
}

/// Linear barrier problem: `-Δv = T_1(f)`, `∂v/∂ν + ‖λ‖_∞ v = 0`.
pub fn subsolution_problem(spec: &ProblemSpec) -> Result<ProblemSpec> {
    if spec.lambda.is_singular() {
        return Err(Error::Inapplicable("lambda is unbounded; no barrier sub-solution".into()));
    }
    let lambda_sup = spec.lambda_sup();
    if !(lambda_sup > 0.0) || !lambda_sup.is_finite() {
        return Err(Error::Inapplicable(format!("lambda sup {lambda_sup} unusable for the barrier")));
    }
    let sub = ProblemSpec {
        mesh: spec.mesh.clone(),
        flux: FluxSpec::laplacian(),
        f: DataField::Truncated { inner: Box::new(spec.f.clone()), level: 1.0 },
        lambda: DataField::Constant(lambda_sup),
        g: DataField::Constant(0.0),
        sigma: SigmaSpec::identity(),
        h: HSpec::power_singular(1.0, 0.0)?,
        dimension: spec.dimension,
        regularization: Regularization::Model,
        boundary_order: spec.boundary_order,
        sign_changing: false,
    };
    Ok(sub)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_unit_disk, generate_unit_square};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn square(m: usize) -> Arc<Mesh2D> {
        generate_unit_square(m).unwrap().into_shared()
    }

    #[test]
    fn regularize_truncates_data() {
        let mesh = square(4);
        let spec = ProblemSpec::model(mesh.clone(), DataField::Constant(3.0), DataField::Constant(1.0), DataField::Constant(1.0), 1.0).unwrap();
        let pt = EvalPoint::interior(0.3, 0.3);
        assert_eq!(regularize(&spec, 2).unwrap().f_n(&pt), 2.0);
        assert_eq!(regularize(&spec, 5).unwrap().f_n(&pt), 3.0);
        let disk = generate_unit_disk(16).unwrap().into_shared();
        let lam = DataField::AngularPower { scale: 1.0, alpha: 0.5, center: 0.0 };
        let spec = ProblemSpec::model(disk, DataField::Constant(0.0), lam, DataField::Constant(1.0), 1.0).unwrap();
        let rp = regularize(&spec, 10).unwrap();
        for theta in [1e-4_f64, 0.01, 0.5, 2.0] {
            let p = EvalPoint::boundary(theta.cos(), theta.sin(), [theta.cos(), theta.sin()]);
            assert_relative_eq!(rp.lambda_n(&p), theta.powf(-0.5).min(10.0), max_relative = 1e-12);
        }
        assert!(regularize(&spec, 0).is_err());
    }

    #[test]
    fn regularize_is_monotone_in_level() {
        let mesh = generate_unit_disk(12).unwrap().into_shared();
        let spec = ProblemSpec::model(
            mesh,
            DataField::PointPower { scale: 1.0, exponent: 1.0, x0: 0.1, y0: 0.0 },
            DataField::AngularPower { scale: 1.0, alpha: 0.5, center: 1.0 },
            DataField::AngularPower { scale: 2.0, alpha: 0.5, center: 0.0 },
            1.0,
        )
        .unwrap();
        let mut prev = regularize(&spec, 1).unwrap();
        for n in 2..40 {
            let next = prev.at_level(n).unwrap();
            for (a, b) in [(&prev.load, &next.load), (&prev.absorption_weight, &next.absorption_weight), (&prev.source_weight, &next.source_weight)] {
                assert!(a.iter().zip(b).all(|(x, y)| x <= y));
            }
            prev = next;
        }
    }

    #[test]
    fn manufactured_constant() {
        for eta in [0.0, 1.0, 2.0] {
            let spec = manufacture(
                ExactSolution::Affine { c0: 1.0, cx: 0.0, cy: 0.0 },
                DataField::Constant(1.0),
                SigmaSpec::identity(),
                HSpec::power_singular(1.0, eta).unwrap(),
                FluxSpec::laplacian(),
                square(4),
                Regularization::General,
            )
            .unwrap();
            for (p, _) in boundary_points(&spec.mesh, 4).unwrap() {
                assert_relative_eq!(spec.g.eval(&p), 1.0, epsilon = 1e-15);
            }
            for (p, _) in interior_points(&spec.mesh) {
                assert_eq!(spec.f.eval(&p), 0.0);
            }
        }
    }

    #[test]
    fn manufactured_affine_faces() {
        // oracle: ∂u/∂ν + u = g/u per face of the square for u = 2 + x
        let face_g = |x: f64, nu: [f64; 2]| {
            let u = 2.0 + x;
            u * (nu[0] + u)
        };
        let spec = manufacture(
            ExactSolution::Affine { c0: 2.0, cx: 1.0, cy: 0.0 },
            DataField::Constant(1.0),
            SigmaSpec::identity(),
            HSpec::power_singular(1.0, 1.0).unwrap(),
            FluxSpec::laplacian(),
            square(4),
            Regularization::General,
        )
        .unwrap();
        assert_eq!(face_g(0.0, [-1.0, 0.0]), 2.0);
        for (p, _) in boundary_points(&spec.mesh, 4).unwrap() {
            assert_relative_eq!(spec.g.eval(&p), face_g(p.x, p.normal.unwrap()), epsilon = 1e-13);
        }
        for (p, _) in interior_points(&spec.mesh) {
            assert_eq!(spec.f.eval(&p), 0.0);
        }
    }

    #[test]
    fn manufactured_load_matches_finite_differences() {
        // oracle: Richardson-extrapolated central differences of a(∇u)
        let cases = [
            (ExactSolution::SinProduct { c0: 2.0, amp: 0.5 }, FluxSpec::laplacian()),
            (ExactSolution::Quadratic { c0: 1.0, cxx: 0.5, cyy: 0.25 }, FluxSpec::p_laplacian(3.0).unwrap()),
            (ExactSolution::SinProduct { c0: 2.0, amp: 0.5 }, FluxSpec::weighted(2.5, 0.5, 2.0).unwrap()),
        ];
        for (exact, flux) in cases {
            for (p, _) in interior_points(&square(3)).into_iter().step_by(5) {
                let (x, y) = (p.x, p.y);
                let a = |x: f64, y: f64| flux.flux(x, y, exact.gradient(x, y));
                let div = |h: f64| {
                    (a(x + h, y)[0] - a(x - h, y)[0]) / (2.0 * h) + (a(x, y + h)[1] - a(x, y - h)[1]) / (2.0 * h)
                };
                let h = 1e-3;
                let extrapolated = (4.0 * div(h / 2.0) - div(h)) / 3.0;
                assert_relative_eq!(exact.load(&flux, x, y), -extrapolated, epsilon = 1e-7, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn manufacture_rejects_negative_g() {
        // steep inflow on x = 0 makes g negative there
        let err = manufacture(
            ExactSolution::Affine { c0: 1.0, cx: 5.0, cy: 0.0 },
            DataField::Constant(1.0),
            SigmaSpec::identity(),
            HSpec::power_singular(1.0, 1.0).unwrap(),
            FluxSpec::laplacian(),
            square(4),
            Regularization::General,
        )
        .unwrap_err();
        assert!(err.to_string().contains("sign violation"));
    }

    #[test]
    fn disk_example_boundary_identity() {
        for alpha in [0.0, 0.5] {
            let mesh = generate_unit_disk(32).unwrap().into_shared();
            let (spec, u) = exact_disk_example(alpha, mesh.clone()).unwrap();
            assert!(spec.sign_changing);
            // at θ = π/2: ∂u/∂ν + λu = 1 + (π/2)^{-α} = g/u
            let top = EvalPoint::boundary(0.0, 1.0, [0.0, 1.0]);
            let lhs = 1.0 + spec.lambda.eval(&top) * 1.0;
            let rhs = spec.g.eval(&top) / 1.0;
            assert_relative_eq!(lhs, 1.0 + (PI / 2.0).powf(-alpha), epsilon = 1e-14);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-14);
            // identity on the circle for |θ| > 1e-6
            for k in 0..2000 {
                let theta = -PI + 2.0 * PI * (k as f64 + 0.5) / 2000.0;
                if theta.abs() <= 1e-6 || theta.sin().abs() < 1e-12 {
                    continue;
                }
                let p = EvalPoint::boundary(theta.cos(), theta.sin(), [theta.cos(), theta.sin()]);
                let un = theta.sin();
                let lhs = theta.sin() + spec.lambda.eval(&p) * un;
                let rhs = spec.g.eval(&p) / un;
                assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
            }
            // u vanishes at θ = π (a mesh vertex)
            let pi_vertex = mesh.vertices().iter().position(|v| (v[0] + 1.0).abs() < 1e-15).unwrap();
            assert!(u.values()[pi_vertex].abs() < 1e-15);
        }
        assert!(exact_disk_example(1.0, generate_unit_disk(8).unwrap().into_shared()).is_err());
    }

    #[test]
    fn subsolution_data() {
        let spec = ProblemSpec::model(square(4), DataField::Constant(3.0), DataField::Constant(1.0), DataField::Constant(5.0), 1.0).unwrap();
        let sub = subsolution_problem(&spec).unwrap();
        let p = EvalPoint::interior(0.5, 0.5);
        let b = EvalPoint::boundary(0.5, 0.0, [0.0, -1.0]);
        assert_eq!(sub.f.eval(&p), 1.0);
        assert_eq!(sub.lambda.eval(&b), 1.0);
        assert_eq!(sub.g.eval(&b), 0.0);
        assert_eq!(sub.eta(), 0.0);
        let disk = generate_unit_disk(8).unwrap().into_shared();
        let singular = ProblemSpec::model(disk, DataField::Constant(1.0), DataField::AngularPower { scale: 1.0, alpha: 0.5, center: 0.0 }, DataField::Constant(1.0), 1.0).unwrap();
        assert!(matches!(subsolution_problem(&singular), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn flux_structure_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for flux in [FluxSpec::p_laplacian(1.5).unwrap(), FluxSpec::laplacian(), FluxSpec::weighted(3.0, 0.25, 4.0).unwrap()] {
            let check = flux.check_structure(&mut rng, 2000);
            assert!(check.passed(), "{flux:?}: {check:?}");
        }
        let w = FluxSpec::weighted(2.0, 0.25, 4.0).unwrap();
        assert_eq!(w.coercivity(), 0.25);
        assert_eq!(w.growth(), 4.0);
    }

    #[test]
    fn model_requires_laplacian() {
        let mut spec = ProblemSpec::model(square(2), DataField::Constant(0.0), DataField::Constant(1.0), DataField::Constant(1.0), 1.0).unwrap();
        spec.flux = FluxSpec::p_laplacian(1.5).unwrap();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn lambda_must_not_vanish() {
        assert!(ProblemSpec::model(square(2), DataField::Constant(0.0), DataField::Constant(0.0), DataField::Constant(1.0), 1.0).is_err());
    }
}
