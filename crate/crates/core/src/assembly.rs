//! Discrete residuals and Jacobians of the level-n problems on P1 elements.
//!
//! The interior flux uses the constant gradient of the interpolant on each
//! triangle. Boundary nonlinearities are mass-lumped: `σ_n` and `h_n` are
//! evaluated at vertices and weighted by `∮ λ_n φ_i` and `∮ g_n φ_i`, which
//! keeps the boundary part of the Jacobian diagonal.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::functions::EvalPoint;
use crate::mesh::{edge_points, gradient_on, DiscreteField, Mesh2D};
use crate::problem::{power_factor, ProblemSpec, RegularizedProblem};
use crate::quadrature::{triangle_rule, GaussLegendre};
use crate::sparse::{Pattern, SparseOperator};

/// Floor added to `|∇u|²` in the p-Laplacian tangent.
pub const TANGENT_REGULARIZATION: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct AssembledResidual {
    pub residual: Vec<f64>,
    pub jacobian: Option<SparseOperator>,
}

/// `∫ f φ_i` by the degree-5 triangle rule.
pub fn load_vector<F>(mesh: &Mesh2D, f: F, exec: Exec) -> Vec<f64>
where
    F: Fn(&EvalPoint) -> f64 + Sync + Send,
{
    let rule = triangle_rule();
    let local = exec.map_range(mesh.num_triangles(), |t| {
        let tri = mesh.triangles()[t];
        let area = mesh.geometry(t).area;
        let v = tri.map(|i| mesh.vertices()[i]);
        let mut out = [0.0; 3];
        for (l, w) in &rule {
            let x = l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0];
            let y = l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1];
            let fv = f(&EvalPoint::interior(x, y)) * w * area;
            for k in 0..3 {
                out[k] += fv * l[k];
            }
        }
        out
    });
    let mut load = vec![0.0; mesh.num_vertices()];
    for (tri, vals) in mesh.triangles().iter().zip(local) {
        for k in 0..3 {
            load[tri[k]] += vals[k];
        }
    }
    load
}

/// `∮ d φ_i` for every vertex, by edge Gauss quadrature.
pub fn boundary_weights<F>(mesh: &Mesh2D, order: usize, d: F) -> Result<Vec<f64>>
where
    F: Fn(&EvalPoint) -> f64,
{
    let rule = GaussLegendre::new(order)?;
    let mut out = vec![0.0; mesh.num_vertices()];
    for e in mesh.boundary_edges() {
        for p in edge_points(mesh.vertices(), e, &rule) {
            let v = d(&Mesh2D::boundary_eval_point(e, &p)) * p.weight;
            out[e.vertices[0]] += v * (1.0 - p.t);
            out[e.vertices[1]] += v * p.t;
        }
    }
    Ok(out)
}

/// `∮ f dH^1` over the mesh boundary.
pub fn boundary_integral<F>(mesh: &Mesh2D, order: usize, f: F) -> Result<f64>
where
    F: Fn(&EvalPoint) -> f64,
{
    let rule = GaussLegendre::new(order)?;
    Ok(mesh
        .boundary_edges()
        .iter()
        .map(|e| {
            edge_points(mesh.vertices(), e, &rule)
                .iter()
                .map(|p| p.weight * f(&Mesh2D::boundary_eval_point(e, p)))
                .sum::<f64>()
        })
        .sum())
}

/// Residual and tangent of a level-n problem, optionally with the boundary
/// source frozen at given per-vertex values of the source factor.
pub(crate) struct System<'a> {
    pub rp: &'a RegularizedProblem,
    pub frozen_source: Option<&'a [f64]>,
    pub exec: Exec,
}

impl<'a> System<'a> {
    pub fn new(rp: &'a RegularizedProblem, exec: Exec) -> Self {
        Self { rp, frozen_source: None, exec }
    }

    pub fn frozen(rp: &'a RegularizedProblem, source: &'a [f64], exec: Exec) -> Self {
        Self { rp, frozen_source: Some(source), exec }
    }

    fn flux_locals(&self, u: &[f64]) -> Vec<[f64; 3]> {
        let mesh = self.rp.mesh();
        let p = self.rp.spec().flux.p;
        self.exec.map_range(mesh.num_triangles(), |t| {
            let geo = mesh.geometry(t);
            let g = gradient_on(mesh, u, t);
            let w = self.rp.omega[t] * power_factor(g, p) * geo.area;
            let mut out = [0.0; 3];
            for (k, o) in out.iter_mut().enumerate() {
                *o = w * (g[0] * geo.grads[k][0] + g[1] * geo.grads[k][1]);
            }
            out
        })
    }

    pub fn residual(&self, u: &[f64]) -> Result<Vec<f64>> {
        if let Some(vertex) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { vertex });
        }
        let mesh = self.rp.mesh();
        let mut r: Vec<f64> = self.rp.load.iter().map(|f| -f).collect();
        for (tri, vals) in mesh.triangles().iter().zip(self.flux_locals(u)) {
            for k in 0..3 {
                r[tri[k]] += vals[k];
            }
        }
        for (i, ri) in r.iter_mut().enumerate() {
            if !mesh.is_boundary(i) {
                continue;
            }
            let source = match self.frozen_source {
                Some(s) => s[i],
                None => self.rp.source(u[i]),
            };
            *ri += self.rp.absorption_weight[i] * self.rp.absorption(u[i]) - self.rp.source_weight[i] * source;
        }
        Ok(r)
    }

    pub fn jacobian(&self, u: &[f64]) -> SparseOperator {
        self.tangent_operator(u, false)
    }

    /// Tangent with the negative part of the boundary source derivative
    /// dropped. It stays positive definite when iterates leave the positive
    /// cone, where `h_n(|u|)` turns increasing in `u`.
    pub fn safeguarded_jacobian(&self, u: &[f64]) -> SparseOperator {
        self.tangent_operator(u, true)
    }

    fn tangent_operator(&self, u: &[f64], safeguard: bool) -> SparseOperator {
        let mesh = self.rp.mesh();
        let pattern: &Pattern = &self.rp.pattern;
        let p = self.rp.spec().flux.p;
        let locals = self.exec.map_range(mesh.num_triangles(), |t| {
            let geo = mesh.geometry(t);
            let g = gradient_on(mesh, u, t);
            let a = tangent(g, p, self.rp.omega[t]);
            let mut k = [[0.0; 3]; 3];
            for i in 0..3 {
                let ag = [a[0][0] * geo.grads[i][0] + a[0][1] * geo.grads[i][1], a[1][0] * geo.grads[i][0] + a[1][1] * geo.grads[i][1]];
                for j in 0..3 {
                    k[i][j] = geo.area * (ag[0] * geo.grads[j][0] + ag[1] * geo.grads[j][1]);
                }
            }
            k
        });
        let mut op = SparseOperator::zeros(pattern);
        for (slots, k) in pattern.element_slots.iter().zip(locals) {
            for i in 0..3 {
                for j in 0..3 {
                    op.values[slots[i][j]] += k[i][j];
                }
            }
        }
        for i in 0..mesh.num_vertices() {
            if !mesh.is_boundary(i) {
                continue;
            }
            let ds = if self.frozen_source.is_some() { 0.0 } else { self.rp.source_derivative(u[i]) };
            let mut source_part = -self.rp.source_weight[i] * ds;
            if safeguard {
                source_part = source_part.max(0.0);
            }
            op.values[pattern.diag_slots[i]] += self.rp.absorption_weight[i] * self.rp.absorption_derivative(u[i]) + source_part;
        }
        op
    }
}

/// `Σ_T ω_T K_T + diag(λ̄)`: the level operator with `p = 2` and linear
/// absorption.
pub(crate) fn linear_operator(rp: &RegularizedProblem) -> SparseOperator {
    let mesh = rp.mesh();
    let pattern: &Pattern = &rp.pattern;
    let mut op = SparseOperator::zeros(pattern);
    for (t, slots) in pattern.element_slots.iter().enumerate() {
        let geo = mesh.geometry(t);
        for i in 0..3 {
            for j in 0..3 {
                op.values[slots[i][j]] +=
                    rp.omega[t] * geo.area * (geo.grads[i][0] * geo.grads[j][0] + geo.grads[i][1] * geo.grads[j][1]);
            }
        }
    }
    for i in mesh.boundary_vertices() {
        op.values[pattern.diag_slots[i]] += rp.absorption_weight[i];
    }
    op
}

/// `ω (|g|²+ε)^{(p-2)/2} (I + (p-2) g gᵀ / (|g|²+ε))`.
fn tangent(g: [f64; 2], p: f64, omega: f64) -> [[f64; 2]; 2] {
    if p == 2.0 {
        return [[omega, 0.0], [0.0, omega]];
    }
    let n2 = g[0] * g[0] + g[1] * g[1] + TANGENT_REGULARIZATION;
    let s = omega * n2.powf(0.5 * (p - 2.0));
    let c = (p - 2.0) / n2;
    [[s * (1.0 + c * g[0] * g[0]), s * c * g[0] * g[1]], [s * c * g[1] * g[0], s * (1.0 + c * g[1] * g[1])]]
}

/// `R_i(u) = ∫ a(∇u_h)·∇φ_i + λ̄_i σ_n(u_i) − ∫ f_n φ_i − ḡ_i h_n(u_i)`.
pub fn assemble_residual(rp: &RegularizedProblem, u: &DiscreteField) -> Result<AssembledResidual> {
    check_mesh(rp, u)?;
    let residual = System::new(rp, Exec::default()).residual(u.values())?;
    Ok(AssembledResidual { residual, jacobian: None })
}

/// Residual together with its tangent.
pub fn assemble_residual_and_jacobian(rp: &RegularizedProblem, u: &DiscreteField) -> Result<AssembledResidual> {
    check_mesh(rp, u)?;
    let sys = System::new(rp, Exec::default());
    Ok(AssembledResidual { residual: sys.residual(u.values())?, jacobian: Some(sys.jacobian(u.values())) })
}

pub fn assemble_jacobian(rp: &RegularizedProblem, u: &DiscreteField) -> Result<SparseOperator> {
    check_mesh(rp, u)?;
    Ok(System::new(rp, Exec::default()).jacobian(u.values()))
}

/// Residual with an explicit execution policy (used by the benches).
pub fn assemble_residual_with(rp: &RegularizedProblem, u: &[f64], exec: Exec) -> Result<Vec<f64>> {
    System::new(rp, exec).residual(u)
}

pub fn assemble_jacobian_with(rp: &RegularizedProblem, u: &[f64], exec: Exec) -> SparseOperator {
    System::new(rp, exec).jacobian(u)
}

fn check_mesh(rp: &RegularizedProblem, u: &DiscreteField) -> Result<()> {
    if u.values().len() != rp.mesh().num_vertices() {
        return Err(Error::invalid("field is not defined on the problem mesh"));
    }
    Ok(())
}

/// P1 stiffness matrix `∫ ∇φ_i·∇φ_j`.
pub fn stiffness_matrix(mesh: &Mesh2D) -> SparseOperator {
    let pattern = Pattern::from_mesh(mesh);
    let mut op = SparseOperator::zeros(&pattern);
    for (t, slots) in pattern.element_slots.iter().enumerate() {
        let geo = mesh.geometry(t);
        for i in 0..3 {
            for j in 0..3 {
                op.values[slots[i][j]] += geo.area * (geo.grads[i][0] * geo.grads[j][0] + geo.grads[i][1] * geo.grads[j][1]);
            }
        }
    }
    op
}

/// Weak residual with every boundary term integrated by edge quadrature of
/// the interpolant and untruncated data:
/// `∫ a(∇u_h)·∇φ_i + ∮ λ σ(u_h) φ_i − ∫ f φ_i − ∮ g h(|u_h|) sgn(u_h) φ_i`.
/// The sign-preserving source makes it usable on sign-changing fixtures.
pub fn quadrature_residual(spec: &ProblemSpec, u: &DiscreteField) -> Result<Vec<f64>> {
    let mesh = &spec.mesh;
    if u.values().len() != mesh.num_vertices() {
        return Err(Error::invalid("field is not defined on the problem mesh"));
    }
    let vals = u.values();
    let exec = Exec::default();
    let load = load_vector(mesh, |p| spec.f.eval(p), exec);
    let mut r: Vec<f64> = load.iter().map(|f| -f).collect();
    for t in 0..mesh.num_triangles() {
        let geo = mesh.geometry(t);
        let tri = mesh.triangles()[t];
        let c = tri.iter().fold([0.0, 0.0], |a, &v| [a[0] + mesh.vertices()[v][0] / 3.0, a[1] + mesh.vertices()[v][1] / 3.0]);
        let flux = spec.flux.flux(c[0], c[1], gradient_on(mesh, vals, t));
        for k in 0..3 {
            r[tri[k]] += geo.area * (flux[0] * geo.grads[k][0] + flux[1] * geo.grads[k][1]);
        }
    }
    let rule = GaussLegendre::new(spec.boundary_order)?;
    for e in mesh.boundary_edges() {
        let (a, b) = (e.vertices[0], e.vertices[1]);
        for p in edge_points(mesh.vertices(), e, &rule) {
            let pt = Mesh2D::boundary_eval_point(e, &p);
            let uh = (1.0 - p.t) * vals[a] + p.t * vals[b];
            let source = if uh == 0.0 { 0.0 } else { spec.g.eval(&pt) * spec.h.eval(uh.abs()) * uh.signum() };
            let v = p.weight * (spec.lambda.eval(&pt) * spec.sigma.eval(uh) - source);
            r[a] += v * (1.0 - p.t);
            r[b] += v * p.t;
        }
    }
    Ok(r)
}

/// Per-row scale `Σ_j |K_ij| + ∮ λ φ_i` of the linear part of the operator.
pub fn row_scale(spec: &ProblemSpec) -> Result<Vec<f64>> {
    let k = stiffness_matrix(&spec.mesh);
    let lam = boundary_weights(&spec.mesh, spec.boundary_order, |p| spec.lambda.eval(p))?;
    Ok((0..k.dim())
        .map(|i| (k.row_ptr[i]..k.row_ptr[i + 1]).map(|s| k.values[s].abs()).sum::<f64>() + lam[i])
        .collect())
}

/// `max_i |R_i| / scale_i` of [`quadrature_residual`].
pub fn scaled_residual_norm(spec: &ProblemSpec, u: &DiscreteField) -> Result<f64> {
    let r = quadrature_residual(spec, u)?;
    let s = row_scale(spec)?;
    Ok(r.iter().zip(&s).map(|(ri, si)| ri.abs() / si).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{DataField, HSpec, SigmaSpec};
    use crate::mesh::{generate_unit_disk, generate_unit_square};
    use crate::problem::{regularize, FluxSpec, Regularization};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn general_spec(mesh: Arc<Mesh2D>, p: f64, f: f64, g: DataField, sigma: SigmaSpec, h: HSpec) -> ProblemSpec {
        let spec = ProblemSpec {
            mesh,
            flux: FluxSpec::p_laplacian(p).unwrap(),
            f: DataField::Constant(f),
            lambda: DataField::Constant(1.0),
            g,
            sigma,
            h,
            dimension: 3,
            regularization: Regularization::General,
            boundary_order: 4,
            sign_changing: false,
        };
        spec.validate().unwrap();
        spec
    }

    #[test]
    fn constant_solution_has_zero_residual() {
        let mesh = generate_unit_square(6).unwrap().into_shared();
        let spec = general_spec(mesh.clone(), 2.0, 0.0, DataField::Constant(1.0), SigmaSpec::identity(), HSpec::power_singular(1.0, 1.0).unwrap());
        let rp = regularize(&spec, 4).unwrap();
        let r = assemble_residual(&rp, &DiscreteField::constant(mesh.clone(), 1.0)).unwrap().residual;
        assert!(r.iter().all(|v| v.abs() <= 1e-12));

        let spec = general_spec(mesh.clone(), 2.0, 0.0, DataField::Constant(0.0), SigmaSpec::identity(), HSpec::power_singular(1.0, 1.0).unwrap());
        let rp = regularize(&spec, 4).unwrap();
        let r = assemble_residual(&rp, &DiscreteField::constant(mesh, 0.0)).unwrap().residual;
        assert!(r.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_non_finite_field() {
        let mesh = generate_unit_square(2).unwrap().into_shared();
        let spec = general_spec(mesh.clone(), 2.0, 0.0, DataField::Constant(1.0), SigmaSpec::identity(), HSpec::bounded(1.0).unwrap());
        let rp = regularize(&spec, 1).unwrap();
        let mut u = vec![1.0; mesh.num_vertices()];
        u[3] = f64::INFINITY;
        assert!(matches!(assemble_residual_with(&rp, &u, Exec::Sequential), Err(Error::NonFinite { vertex: 3 })));
    }

    #[test]
    fn linear_jacobian_is_spd_stiffness_plus_mass() {
        let mesh = generate_unit_square(5).unwrap().into_shared();
        let spec = general_spec(mesh.clone(), 2.0, 1.0, DataField::Constant(1.0), SigmaSpec::identity(), HSpec::bounded(1.0).unwrap());
        let rp = regularize(&spec, 10).unwrap();
        let u = DiscreteField::constant(mesh.clone(), 0.7);
        let j = assemble_jacobian(&rp, &u).unwrap();
        assert!(j.asymmetry() <= 1e-14);
        assert!(j.diagonal().iter().all(|d| *d > 0.0));
        let k = stiffness_matrix(&mesh);
        let bm = mesh.lumped_boundary_measure();
        for (i, jj, v) in j.triplets() {
            let expected = k.get(i, jj) + if i == jj { bm[i] } else { 0.0 };
            assert_relative_eq!(v, expected, epsilon = 1e-13);
        }
        // stiffness rows sum to zero
        let ones = vec![1.0; mesh.num_vertices()];
        assert!(k.apply(&ones).iter().all(|v| v.abs() <= 1e-12));
        // positive definiteness on random vectors
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let jx = j.apply(&x);
            assert!(x.iter().zip(&jx).map(|(a, b)| a * b).sum::<f64>() > 0.0);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [1.5, 2.0, 3.0] {
            let mesh = generate_unit_disk(12).unwrap().into_shared();
            let spec = general_spec(
                mesh.clone(),
                p,
                1.0,
                DataField::AngularPower { scale: 1.0, alpha: 0.3, center: 0.5 },
                SigmaSpec::power(p - 1.0, 1.0).unwrap(),
                HSpec::power_singular(1.0, 1.0).unwrap(),
            );
            let rp = regularize(&spec, 1 << 20).unwrap();
            let u: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.random_range(0.5..1.5)).collect();
            let sys = System::new(&rp, Exec::default());
            let r0 = sys.residual(&u).unwrap();
            let j = sys.jacobian(&u);
            let eps = 1e-6;
            for _ in 0..20 {
                let col = rng.random_range(0..mesh.num_vertices());
                let mut up = u.clone();
                up[col] += eps;
                let r1 = sys.residual(&up).unwrap();
                let err: f64 = (0..r0.len())
                    .map(|i| ((r1[i] - r0[i]) / eps - j.get(i, col)).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(err <= 1e-5, "p = {p}, column {col}: {err:e}");
            }
        }
    }

    #[test]
    fn parallel_and_sequential_assembly_agree() {
        let mesh = generate_unit_square(20).unwrap().into_shared();
        let spec = general_spec(mesh.clone(), 1.5, 1.0, DataField::Constant(1.0), SigmaSpec::power(0.5, 1.0).unwrap(), HSpec::power_singular(1.0, 1.0).unwrap());
        let rp = regularize(&spec, 100).unwrap();
        let u: Vec<f64> = mesh.vertices().iter().map(|v| 1.0 + v[0] * v[1]).collect();
        let a = assemble_residual_with(&rp, &u, Exec::Sequential).unwrap();
        let b = assemble_residual_with(&rp, &u, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(assemble_jacobian_with(&rp, &u, Exec::Sequential), assemble_jacobian_with(&rp, &u, Exec::Parallel));
    }

    #[test]
    fn boundary_integrals() {
        let square = generate_unit_square(4).unwrap();
        assert_relative_eq!(boundary_integral(&square, 4, |_| 1.0).unwrap(), 4.0, epsilon = 1e-12);

        // oracle: ∫_0^{2π} sin²θ dθ = π, polygonal error O(m^-2)
        let mut prev = f64::INFINITY;
        for m in [16, 32, 64, 128] {
            let disk = generate_unit_disk(m).unwrap();
            let v = boundary_integral(&disk, 4, |p| p.theta().sin().powi(2)).unwrap();
            let err = (v - PI).abs();
            assert!(err < prev && err <= 40.0 / (m * m) as f64, "m = {m}: {err:e}");
            prev = err;
        }

        // oracle: ∫_{-π}^{π} |θ|^{-1/2} dθ = 4√π; the edge straddling θ = 0
        // contributes O(h^{1/2}), so quadrupling m halves the error
        let exact = 4.0 * PI.sqrt();
        let err = |m: usize, order: usize| {
            let disk = generate_unit_disk(m).unwrap();
            (boundary_integral(&disk, order, |p| p.theta().abs().max(1e-12).powf(-0.5)).unwrap() - exact).abs()
        };
        for order in [2, 4, 8] {
            let (coarse, fine) = (err(32, order), err(128, order));
            assert!(coarse.is_finite() && fine.is_finite());
            let ratio = coarse / fine;
            assert!((1.7..2.3).contains(&ratio), "order {order}: {coarse:e} -> {fine:e}");
        }
        assert!(err(128, 8) / exact < 0.02);
    }
}
