//! Turning a [`RunConfig`] into meshes, problem specs and solver settings.

use std::sync::Arc;

use anyhow::{bail, Result};
use robin_fem::functions::{DataField, HSpec, SigmaSpec};
use robin_fem::problem::{exact_disk_example, FluxSpec, ProblemSpec, Regularization};
use robin_fem::solver::{power_schedule, SolverConfig, SolverMode};
use robin_fem::{generate_unit_disk, generate_unit_square, instances, DiscreteField, Exec, Mesh2D};

use crate::config::{DomainKind, HKind, Instance, ModeKind, RunConfig, SolverKind};

/// Base mesh refined `extra` more times than the configured `mesh.refine`.
pub fn mesh_at(cfg: &RunConfig, extra: usize) -> Result<Arc<Mesh2D>> {
    let mut mesh = match cfg.domain {
        DomainKind::Square => generate_unit_square(cfg.m)?,
        DomainKind::Disk => generate_unit_disk(cfg.m)?,
    };
    for _ in 0..cfg.refine + extra {
        mesh = mesh.refine_uniform()?;
    }
    Ok(mesh.into_shared())
}

pub fn mesh(cfg: &RunConfig) -> Result<Arc<Mesh2D>> {
    mesh_at(cfg, 0)
}

fn h_spec(cfg: &RunConfig) -> Result<HSpec> {
    Ok(match cfg.h_family {
        HKind::PowerSingular => HSpec::power_singular(cfg.h_c1, cfg.eta)?,
        HKind::Bounded => HSpec::bounded(cfg.h_c1)?,
        HKind::Rational => HSpec::rational(cfg.h_c1, cfg.eta, cfg.h_s2)?,
    })
}

fn flux(cfg: &RunConfig, p: f64) -> Result<FluxSpec> {
    if cfg.omega_min == 1.0 && cfg.omega_max == 1.0 {
        Ok(FluxSpec::p_laplacian(p)?)
    } else {
        Ok(FluxSpec::weighted(p, cfg.omega_min, cfg.omega_max)?)
    }
}

/// The problem of the configured instance on `mesh`.
pub fn spec(cfg: &RunConfig, mesh: Arc<Mesh2D>) -> Result<ProblemSpec> {
    let mut spec = match cfg.instance {
        Instance::Custom => {
            let (Some(f), Some(lambda), Some(g)) = (cfg.f, cfg.lambda, cfg.g) else {
                bail!("custom instance needs data.f, data.lambda and data.g");
            };
            let (f, lambda, g) = (f.to_field(), lambda.to_field(), g.to_field());
            match cfg.mode {
                ModeKind::Model => {
                    let mut spec = ProblemSpec::model(mesh, f, lambda, g, cfg.eta)?;
                    spec.h = h_spec(cfg)?;
                    spec
                }
                ModeKind::General => {
                    let Some(p) = cfg.p else { bail!("general mode needs flux.p") };
                    ProblemSpec {
                        mesh,
                        flux: flux(cfg, p)?,
                        f,
                        lambda,
                        g,
                        sigma: SigmaSpec::power(cfg.sigma_q, cfg.sigma_scale)?,
                        h: h_spec(cfg)?,
                        dimension: cfg.dimension,
                        regularization: Regularization::General,
                        boundary_order: cfg.boundary_order,
                        sign_changing: false,
                    }
                }
            }
        }
        Instance::Constant => instances::constant_solution(mesh, cfg.eta)?,
        Instance::Affine => instances::affine_manufactured(mesh)?,
        Instance::DiskExample => exact_disk_example(cfg.alpha, mesh)?.0,
        Instance::SingularBoundary => ProblemSpec::model(
            mesh,
            DataField::Constant(0.0),
            DataField::Constant(1.0),
            DataField::AngularPower { scale: 1.0, alpha: cfg.alpha, center: 0.0 },
            cfg.eta,
        )?,
        Instance::Barrier => {
            let one = || DataField::Constant(1.0);
            ProblemSpec::model(mesh, one(), one(), one(), cfg.eta)?
        }
        Instance::SingularDemo => {
            let mut spec = instances::singular_demo(mesh, cfg.eta)?;
            if let Some(p) = cfg.p {
                spec.flux = FluxSpec::p_laplacian(p)?;
                spec.sigma = SigmaSpec::power(p - 1.0, 1.0)?;
            }
            spec
        }
    };
    spec.dimension = cfg.dimension;
    spec.boundary_order = cfg.boundary_order;
    spec.validate()?;
    Ok(spec)
}

/// Interpolated exact solution of the instances that have one.
pub fn exact_field(cfg: &RunConfig, mesh: Arc<Mesh2D>) -> Result<Option<DiscreteField>> {
    Ok(match cfg.instance {
        Instance::Constant => Some(DiscreteField::constant(mesh, 1.0)),
        Instance::Affine => {
            let exact = instances::affine_exact();
            Some(DiscreteField::interpolate(mesh, |x, y| exact.value(x, y)))
        }
        Instance::DiskExample => Some(exact_disk_example(cfg.alpha, mesh)?.1),
        _ => None,
    })
}

/// `n_min, n_min b, n_min b², …` up to and including `n_max`.
pub fn schedule(n_min: u64, base: u64, n_max: u64) -> Vec<u64> {
    power_schedule(base, n_max.div_ceil(n_min)).into_iter().map(|k| (k * n_min).min(n_max)).collect()
}

pub fn solver_config(cfg: &RunConfig) -> SolverConfig {
    let s = &cfg.solver;
    SolverConfig {
        mode: match s.mode {
            SolverKind::Newton => SolverMode::Newton,
            SolverKind::Picard => SolverMode::Picard,
        },
        tol_fp: s.tol_fp,
        tol_res: s.tol_res,
        max_iter: s.max_iter,
        damping: s.damping,
        lin_tol: s.lin_tol,
        schedule: schedule(s.n_min, s.schedule_base, s.n_max),
        tol_ladder: s.tol_ladder,
        exec: if s.parallel { Exec::default() } else { Exec::Sequential },
    }
}
