//! Level solvers (Newton, and Picard iteration of the Schauder map on the
//! boundary trace), the regularization ladder and the barrier problem.

use std::time::{Duration, Instant};

use crate::assembly::{self, System};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::mesh::DiscreteField;
use crate::problem::{regularize, regularize_at, subsolution_problem, ProblemSpec, RegularizedProblem};
use crate::sparse;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    Picard,
    Newton,
}

impl std::str::FromStr for SolverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "picard" => Ok(SolverMode::Picard),
            "newton" => Ok(SolverMode::Newton),
            other => Err(Error::Parse(format!("unknown solver mode '{other}' (expected picard or newton)"))),
        }
    }
}

impl std::fmt::Display for SolverMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverMode::Picard => "picard",
            SolverMode::Newton => "newton",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub mode: SolverMode,
    /// Boundary-trace L² change that ends a Picard iteration.
    pub tol_fp: f64,
    /// Residual tolerance, relative to `1 + ‖F‖₂ + ‖ḡ‖₂` of the level.
    pub tol_res: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Relative tolerance of the inner Krylov solves.
    pub lin_tol: f64,
    pub schedule: Vec<u64>,
    /// Nodal max change between consecutive levels that ends the ladder.
    pub tol_ladder: f64,
    pub exec: Exec,
}

pub const DEFAULT_N_MAX: u64 = 1 << 14;

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: SolverMode::Newton,
            tol_fp: 1e-10,
            tol_res: 1e-10,
            max_iter: 100,
            damping: 1.0,
            lin_tol: 1e-12,
            schedule: geometric_schedule(DEFAULT_N_MAX),
            tol_ladder: 1e-9,
            exec: Exec::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("tol_fp", self.tol_fp), ("tol_res", self.tol_res), ("lin_tol", self.lin_tol), ("tol_ladder", self.tol_ladder)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid(format!("solver.damping must lie in (0,1], got {}", self.damping)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("solver.max_iter must be positive"));
        }
        if self.schedule.is_empty() || self.schedule.contains(&0) {
            return Err(Error::invalid("schedule must be a nonempty list of levels >= 1"));
        }
        if self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("schedule must be strictly increasing"));
        }
        Ok(())
    }
}

/// `1, 2, 4, …` up to and including `n_max` (which is appended if it is not
/// a power of two).
pub fn geometric_schedule(n_max: u64) -> Vec<u64> {
    power_schedule(2, n_max)
}

/// `1, b, b², …` up to and including `n_max`.
pub fn power_schedule(base: u64, n_max: u64) -> Vec<u64> {
    let mut out = vec![1];
    let mut n = 1u64;
    while let Some(next) = n.checked_mul(base.max(2)) {
        if next > n_max {
            break;
        }
        out.push(next);
        n = next;
    }
    if *out.last().unwrap() < n_max {
        out.push(n_max);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub level: f64,
    pub iteration: usize,
    pub residual: f64,
    pub boundary_change: f64,
    pub min_node: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub level: f64,
    pub mode: SolverMode,
    pub iterations: usize,
    pub records: Vec<IterationRecord>,
    pub field: DiscreteField,
    pub min_node: f64,
    pub min_boundary: f64,
    /// `|Σ_i R_i(u)|`: absorption minus load minus source.
    pub mass_balance_defect: f64,
    pub residual_scale: f64,
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn residual_history(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    pub fn final_residual(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.residual)
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual_scale(rp: &RegularizedProblem) -> f64 {
    1.0 + norm2(&rp.load) + norm2(&rp.source_weight)
}

/// Boundary-trace L² distance with the lumped boundary measure.
fn trace_distance(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    weights.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn boundary_trace(rp: &RegularizedProblem, u: &[f64]) -> Vec<f64> {
    rp.mesh().boundary_vertices().iter().map(|&i| u[i]).collect()
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Damped Newton with backtracking: a step is accepted only if it lowers
/// `‖R‖₂`.
fn newton(
    sys: &System<'_>,
    mut u: Vec<f64>,
    config: &SolverConfig,
    target: f64,
    trace_weights: &[f64],
    records: &mut Vec<IterationRecord>,
) -> Result<Vec<f64>> {
    let rp = sys.rp;
    let boundary = rp.mesh().boundary_vertices();
    let spd = rp.tangent_is_spd();
    let mut r = sys.residual(&u)?;
    let mut norm = norm2(&r);
    let mut change = 0.0;
    let start = records.len();
    for iteration in 0..=config.max_iter {
        records.push(IterationRecord { level: rp.level(), iteration, residual: norm, boundary_change: change, min_node: min_of(&u) });
        if norm <= target {
            return Ok(u);
        }
        if iteration == config.max_iter {
            break;
        }
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let mut accepted = None;
        let mut linear_error = None;
        for safeguard in [false, true] {
            let j = if safeguard { sys.safeguarded_jacobian(&u) } else { sys.jacobian(&u) };
            let mut step = vec![0.0; u.len()];
            if let Err(e) = sparse::solve(&j, &rhs, &mut step, config.lin_tol, spd || safeguard, config.exec) {
                linear_error = Some(e);
                continue;
            }
            accepted = line_search(sys, &u, &step, norm, config.damping);
            if accepted.is_some() {
                break;
            }
        }
        let Some((trial, rt, nt)) = accepted else {
            if let Some(e) = linear_error {
                return Err(e);
            }
            break;
        };
        let old: Vec<f64> = boundary.iter().map(|&i| u[i]).collect();
        let new: Vec<f64> = boundary.iter().map(|&i| trial[i]).collect();
        change = trace_distance(trace_weights, &old, &new);
        u = trial;
        r = rt;
        norm = nt;
    }
    Err(Error::NotConverged {
        what: "newton",
        iterations: records.len() - start - 1,
        last: norm,
        history: records[start..].iter().map(|r| r.residual).collect(),
    })
}

/// Halve the step from `t0` until the residual norm strictly decreases.
fn line_search(sys: &System<'_>, u: &[f64], step: &[f64], norm: f64, t0: f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let mut t = t0;
    for _ in 0..40 {
        let trial: Vec<f64> = u.iter().zip(step).map(|(a, d)| a + t * d).collect();
        if let Ok(rt) = sys.residual(&trial) {
            let nt = norm2(&rt);
            if nt < norm {
                return Some((trial, rt, nt));
            }
        }
        t *= 0.5;
    }
    None
}

/// Starting point for a level started from the zero field: one solve of the
/// linear operator with the boundary source frozen at `u ≡ 0`. On Delaunay
/// meshes it is nonnegative for nonnegative data, and it moves the iterate
/// off `u = 0`, where `σ` and the `p`-Laplacian tangent may degenerate.
fn linear_predictor(rp: &RegularizedProblem, config: &SolverConfig) -> Result<Vec<f64>> {
    let mesh = rp.mesh();
    let mut rhs = rp.load.clone();
    let h0 = rp.source(0.0);
    for i in mesh.boundary_vertices() {
        rhs[i] += rp.source_weight[i] * h0;
    }
    let mut w = vec![0.0; mesh.num_vertices()];
    sparse::solve(&assembly::linear_operator(rp), &rhs, &mut w, config.lin_tol, true, config.exec)?;
    let ceiling = absorption_ceiling(rp);
    w.iter_mut().for_each(|v| *v = v.clamp(-ceiling, ceiling));
    Ok(w)
}

/// Largest `s` with `σ(s) <= n`. Past it `σ_n` is flat, the boundary
/// tangent loses its absorption term and Newton steps run off along the
/// constants.
fn absorption_ceiling(rp: &RegularizedProblem) -> f64 {
    let sigma = &rp.spec().sigma;
    let n = rp.level();
    if !sigma.monotone {
        return f64::INFINITY;
    }
    let mut hi = 1.0;
    while sigma.eval(hi) <= n {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if sigma.eval(mid) <= n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Solve the level problem with the boundary source frozen at the trace
/// `v` (aligned with [`crate::mesh::Mesh2D::boundary_vertices`]), keeping the
/// absorption implicit.
pub fn schauder_map(rp: &RegularizedProblem, v: &[f64], config: &SolverConfig) -> Result<DiscreteField> {
    let boundary = rp.mesh().boundary_vertices();
    if v.len() != boundary.len() {
        return Err(Error::invalid(format!("trace has {} values, mesh has {} boundary vertices", v.len(), boundary.len())));
    }
    let guess = vec![0.0; rp.mesh().num_vertices()];
    let w = schauder_step(rp, v, config, guess, &mut Vec::new())?;
    DiscreteField::new(rp.mesh().clone(), w)
}

fn schauder_step(
    rp: &RegularizedProblem,
    v: &[f64],
    config: &SolverConfig,
    guess: Vec<f64>,
    records: &mut Vec<IterationRecord>,
) -> Result<Vec<f64>> {
    let mesh = rp.mesh();
    let mut source = vec![0.0; mesh.num_vertices()];
    for (&i, &vi) in mesh.boundary_vertices().iter().zip(v) {
        source[i] = rp.source(vi);
    }
    let sys = System::frozen(rp, &source, config.exec);
    if rp.is_linear_absorption() && rp.spec().flux.p == 2.0 {
        let zero = vec![0.0; mesh.num_vertices()];
        let b: Vec<f64> = sys.residual(&zero)?.iter().map(|r| -r).collect();
        let a = sys.jacobian(&zero);
        let mut w = guess;
        sparse::solve(&a, &b, &mut w, config.lin_tol, true, config.exec)?;
        return Ok(w);
    }
    let weights = trace_weights(rp);
    let target = config.tol_res * residual_scale(rp);
    let mut inner = Vec::new();
    let w = newton(&sys, guess, config, target, &weights, &mut inner)?;
    records.extend(inner.last().copied());
    Ok(w)
}

fn trace_weights(rp: &RegularizedProblem) -> Vec<f64> {
    let m = rp.mesh().lumped_boundary_measure();
    rp.mesh().boundary_vertices().iter().map(|&i| m[i]).collect()
}

/// Solve one level from `initial`.
pub fn solve_level(rp: &RegularizedProblem, config: &SolverConfig, initial: &DiscreteField) -> Result<(DiscreteField, SolveReport)> {
    config.validate()?;
    if rp.spec().sign_changing {
        return Err(Error::invalid("sign-changing fixtures are residual-evaluation only"));
    }
    if initial.values().len() != rp.mesh().num_vertices() {
        return Err(Error::invalid("initial guess is not defined on the problem mesh"));
    }
    if let Some((most, least)) = rp.supply_exceeds_absorption() {
        return Err(Error::Inapplicable(format!(
            "level {} has no solution: boundary absorption is at most {most:.6e}, load and source supply at least {least:.6e}",
            rp.level()
        )));
    }
    let clock = Instant::now();
    let weights = trace_weights(rp);
    let scale = residual_scale(rp);
    let mut records = Vec::new();
    let start = if initial.values().iter().all(|&v| v == 0.0) { linear_predictor(rp, config)? } else { initial.values().to_vec() };
    let u = match config.mode {
        SolverMode::Newton => {
            let sys = System::new(rp, config.exec);
            newton(&sys, start, config, config.tol_res * scale, &weights, &mut records)?
        }
        SolverMode::Picard => picard(rp, config, start, &weights, &mut records)?,
    };
    let full = System::new(rp, config.exec);
    let r = full.residual(&u)?;
    let field = DiscreteField::new(rp.mesh().clone(), u)?;
    let report = SolveReport {
        level: rp.level(),
        mode: config.mode,
        iterations: records.len().saturating_sub(1),
        records,
        min_node: field.min(),
        min_boundary: field.boundary_min(),
        mass_balance_defect: r.iter().sum::<f64>().abs(),
        residual_scale: scale,
        field: field.clone(),
        wall_time: clock.elapsed(),
    };
    Ok((field, report))
}

/// `v ← (1−d) v + d T(v)` on the boundary trace, halving `d` after two
/// consecutive increases of the trace change.
fn picard(
    rp: &RegularizedProblem,
    config: &SolverConfig,
    mut u: Vec<f64>,
    weights: &[f64],
    records: &mut Vec<IterationRecord>,
) -> Result<Vec<f64>> {
    let full = System::new(rp, config.exec);
    let mut v = boundary_trace(rp, &u);
    let mut damping = config.damping;
    let mut previous = f64::INFINITY;
    let mut increases = 0;
    for iteration in 0..config.max_iter {
        let mut inner = Vec::new();
        u = schauder_step(rp, &v, config, u, &mut inner)?;
        let w = boundary_trace(rp, &u);
        let change = trace_distance(weights, &v, &w);
        let residual = norm2(&full.residual(&u)?);
        records.push(IterationRecord { level: rp.level(), iteration, residual, boundary_change: change, min_node: min_of(&u) });
        if change <= config.tol_fp {
            return Ok(u);
        }
        if change > previous {
            increases += 1;
            if increases >= 2 {
                damping *= 0.5;
                increases = 0;
            }
        } else {
            increases = 0;
        }
        previous = change;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = (1.0 - damping) * *vi + damping * wi;
        }
    }
    Err(Error::NotConverged {
        what: "picard",
        iterations: config.max_iter,
        last: previous,
        history: records.iter().map(|r| r.boundary_change).collect(),
    })
}

/// Levels solved by [`run_ladder`], and the error that stopped it early.
#[derive(Debug)]
pub struct LadderOutcome {
    pub reports: Vec<SolveReport>,
    pub error: Option<Error>,
}

/// Solve the levels of the schedule in order, warm-starting each from the
/// previous one, until consecutive levels differ by at most `tol_ladder`.
/// Levels finished before a failure are kept.
pub fn run_ladder(spec: &ProblemSpec, config: &SolverConfig) -> LadderOutcome {
    let mut reports: Vec<SolveReport> = Vec::with_capacity(config.schedule.len());
    if let Err(error) = config.validate().and_then(|_| spec.validate()) {
        return LadderOutcome { reports, error: Some(error) };
    }
    let mut u = DiscreteField::constant(spec.mesh.clone(), 0.0);
    let mut pattern = None;
    for &n in &config.schedule {
        let level = regularize_at(spec, n as f64, pattern.clone()).and_then(|rp| {
            pattern = Some(rp.pattern.clone());
            solve_level(&rp, config, &u)
        });
        let (next, report) = match level {
            Ok(done) => done,
            Err(error) => return LadderOutcome { reports, error: Some(error) },
        };
        let change = next.max_abs_diff(&u);
        let first = reports.is_empty();
        reports.push(report);
        u = next;
        if !first && change <= config.tol_ladder {
            break;
        }
    }
    LadderOutcome { reports, error: None }
}

pub fn solve_ladder(spec: &ProblemSpec, config: &SolverConfig) -> Result<(DiscreteField, Vec<SolveReport>)> {
    let outcome = run_ladder(spec, config);
    if let Some(error) = outcome.error {
        return Err(error);
    }
    let last = outcome.reports.last().map(|r| r.field.clone()).ok_or_else(|| Error::invalid("empty schedule"))?;
    Ok((last, outcome.reports))
}

/// Largest nodal decrease `max_i (u_n − u_{n'})` over consecutive levels.
pub fn ladder_decrease(reports: &[SolveReport]) -> f64 {
    reports
        .windows(2)
        .map(|w| {
            w[0].field
                .values()
                .iter()
                .zip(w[1].field.values())
                .map(|(a, b)| a - b)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solve the linear barrier problem and return `v` with
/// `c̄ = min_{boundary} v`.
pub fn solve_barrier(spec: &ProblemSpec, config: &SolverConfig) -> Result<(DiscreteField, f64)> {
    let sub = subsolution_problem(spec)?;
    let level = sub.lambda_sup().max(1.0);
    let rp = regularize_at(&sub, level, None)?;
    let trace = vec![0.0; rp.mesh().boundary_vertices().len()];
    let w = schauder_step(&rp, &trace, config, vec![0.0; rp.mesh().num_vertices()], &mut Vec::new())?;
    let v = DiscreteField::new(rp.mesh().clone(), w)?;
    let c_bar = v.boundary_min();
    Ok((v, c_bar))
}

/// Convenience: solve a single level `n` from a cold start `u ≡ c`.
pub fn solve_cold(spec: &ProblemSpec, n: u64, c: f64, config: &SolverConfig) -> Result<(DiscreteField, SolveReport)> {
    let rp = regularize(spec, n)?;
    solve_level(&rp, config, &DiscreteField::constant(spec.mesh.clone(), c))
}
