//! Named problem instances used by the verification studies and the CLI.

use std::sync::Arc;

use crate::error::Result;
use crate::functions::{DataField, HSpec, SigmaSpec};
use crate::mesh::Mesh2D;
use crate::problem::{manufacture, ExactSolution, FluxSpec, ProblemSpec, Regularization, DEFAULT_BOUNDARY_ORDER};

/// `f ≡ 0`, `λ ≡ g ≡ 1`, `σ(s) = s`, `h(s) = s^{-η}`, `p = 2`, whose
/// solution is `u ≡ 1` at every level `n ≥ 1`.
pub fn constant_solution(mesh: Arc<Mesh2D>, eta: f64) -> Result<ProblemSpec> {
    let spec = ProblemSpec {
        mesh,
        flux: FluxSpec::laplacian(),
        f: DataField::Constant(0.0),
        lambda: DataField::Constant(1.0),
        g: DataField::Constant(1.0),
        sigma: SigmaSpec::identity(),
        h: HSpec::power_singular(1.0, eta)?,
        dimension: 2,
        regularization: Regularization::General,
        boundary_order: DEFAULT_BOUNDARY_ORDER,
        sign_changing: false,
    };
    spec.validate()?;
    Ok(spec)
}

/// Exact solution `u = 2 + x` with `p = 2`, `η = 1`, `λ ≡ 1`.
pub fn affine_manufactured(mesh: Arc<Mesh2D>) -> Result<ProblemSpec> {
    manufacture(
        affine_exact(),
        DataField::Constant(1.0),
        SigmaSpec::identity(),
        HSpec::power_singular(1.0, 1.0)?,
        FluxSpec::laplacian(),
        mesh,
        Regularization::General,
    )
}

pub fn affine_exact() -> ExactSolution {
    ExactSolution::Affine { c0: 2.0, cx: 1.0, cy: 0.0 }
}

/// Model problem with `f ≡ 0`, `λ ≡ 1`, `η = 1` and
/// `g(θ) = |θ|^{-1/2}`, which is only integrable on the unit circle.
pub fn singular_boundary_model(mesh: Arc<Mesh2D>) -> Result<ProblemSpec> {
    ProblemSpec::model(
        mesh,
        DataField::Constant(0.0),
        DataField::Constant(1.0),
        DataField::AngularPower { scale: 1.0, alpha: 0.5, center: 0.0 },
        1.0,
    )
}

/// Model problem with `f ≡ λ ≡ g ≡ 1` and `η = 1`, for the barrier bound.
pub fn barrier_model(mesh: Arc<Mesh2D>) -> Result<ProblemSpec> {
    ProblemSpec::model(mesh, DataField::Constant(1.0), DataField::Constant(1.0), DataField::Constant(1.0), 1.0)
}

/// General problem on the unit square with `p = 1.5`, `N = 2`,
/// `f = |x − (½,½)|^{-1}`, `λ ≡ 1`, `g = |x − (½,0)|^{-1/2}`,
/// `σ(s) = s^{1/2}` and `h(s) = s^{-η}`.
pub fn singular_demo(mesh: Arc<Mesh2D>, eta: f64) -> Result<ProblemSpec> {
    let spec = ProblemSpec {
        mesh,
        flux: FluxSpec::p_laplacian(1.5)?,
        f: DataField::PointPower { scale: 1.0, exponent: 1.0, x0: 0.5, y0: 0.5 },
        lambda: DataField::Constant(1.0),
        g: DataField::PointPower { scale: 1.0, exponent: 0.5, x0: 0.5, y0: 0.0 },
        sigma: SigmaSpec::power(0.5, 1.0)?,
        h: HSpec::power_singular(1.0, eta)?,
        dimension: 2,
        regularization: Regularization::General,
        boundary_order: DEFAULT_BOUNDARY_ORDER,
        sign_changing: false,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_unit_disk, generate_unit_square};

    #[test]
    fn instances_validate() {
        let sq = generate_unit_square(4).unwrap().into_shared();
        let disk = generate_unit_disk(16).unwrap().into_shared();
        for eta in [0.0, 1.0, 2.0] {
            constant_solution(sq.clone(), eta).unwrap();
            singular_demo(sq.clone(), eta).unwrap();
        }
        affine_manufactured(sq.clone()).unwrap();
        barrier_model(sq).unwrap();
        singular_boundary_model(disk).unwrap();
    }
}
