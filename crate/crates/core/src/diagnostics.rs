//! Numerical checks of the a-priori estimates, the entropy formulation and
//! uniqueness on computed fields.
//!
//! Superlevel sets are taken at vertices with lumped measures, so the
//! discrete estimates read exactly like the assembled equations.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::functions::{clamp_sym, log_grid, EvalPoint};
use crate::mesh::{edge_points, gradient_on, DiscreteField, Mesh2D};
use crate::problem::{ProblemSpec, RegularizedProblem};
use crate::quadrature::{triangle_rule, GaussLegendre};
use crate::solver::{solve_cold, SolverConfig};

/// Number of points of the default threshold and k grids.
pub const DEFAULT_GRID_POINTS: usize = 40;

/// Nodal values below this count as zero for the degenerate-set condition.
pub const ZERO_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Refused(String),
    Inapplicable(String),
}

impl CheckStatus {
    pub fn label(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Refused(_) => "refused",
            CheckStatus::Inapplicable(_) => "inapplicable",
        }
    }
}

/// One row of a check: a grid parameter, the measured value and the bound
/// it is compared with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckRow {
    pub parameter: f64,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub tolerance: f64,
    pub mesh: String,
    pub level: Option<f64>,
    pub rows: Vec<CheckRow>,
}

impl Check {
    pub fn new(name: &str, tolerance: f64, mesh: &Mesh2D, level: Option<f64>) -> Self {
        Self { name: name.into(), status: CheckStatus::Pass, tolerance, mesh: mesh_label(mesh), level, rows: Vec::new() }
    }

    /// Attach rows and set the status to pass or fail.
    pub fn with_rows(mut self, rows: Vec<CheckRow>, passed: bool) -> Self {
        self.rows = rows;
        self.status = if passed { CheckStatus::Pass } else { CheckStatus::Fail };
        self
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    /// Refused and inapplicable checks do not count as failures.
    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

pub fn mesh_label(mesh: &Mesh2D) -> String {
    format!("V={} T={} h={:.6e}", mesh.num_vertices(), mesh.num_triangles(), mesh.mesh_size())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimateReport {
    pub checks: Vec<Check>,
}

impl EstimateReport {
    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn all_passed(&self) -> bool {
        !self.checks.iter().any(Check::failed)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "check,status,parameter,measured,bound,tolerance,level,mesh")?;
        for c in &self.checks {
            let level = c.level.map_or(String::new(), |l| format!("{l:.16e}"));
            if c.rows.is_empty() {
                writeln!(w, "{},{},,,,{:.16e},{},{}", c.name, c.status.label(), c.tolerance, level, c.mesh)?;
            }
            for r in &c.rows {
                writeln!(
                    w,
                    "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                    c.name,
                    c.status.label(),
                    r.parameter,
                    r.measured,
                    r.bound,
                    c.tolerance,
                    level,
                    c.mesh
                )?;
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let level = c.level.map_or(String::from("-"), |l| format!("{l}"));
            let detail = match &c.status {
                CheckStatus::Refused(why) | CheckStatus::Inapplicable(why) => format!(" ({why})"),
                _ => String::new(),
            };
            let _ = writeln!(s, "{:<28} {:<12} level {:<8} tol {:.1e}  [{}]{}", c.name, c.status.label(), level, c.tolerance, c.mesh, detail);
        }
        let failed = self.checks.iter().filter(|c| c.failed()).count();
        let _ = writeln!(s, "{} checks, {} failed", self.checks.len(), failed);
        s
    }
}

/// Area of `{x ∈ T : w(x) < c}` for the linear `w` with vertex values `w`.
fn area_below(w: [f64; 3], c: f64, area: f64) -> f64 {
    let mut s = w;
    s.sort_by(f64::total_cmp);
    let [a, b, d] = s;
    if c <= a {
        0.0
    } else if c >= d {
        area
    } else if c <= b {
        area * (c - a) * (c - a) / ((b - a) * (d - a))
    } else {
        area * (1.0 - (d - c) * (d - c) / ((d - a) * (d - b)))
    }
}

/// Area of `{x ∈ T : |w(x)| < k}`.
fn band_area(w: [f64; 3], k: f64, area: f64) -> f64 {
    let below = area_below(w, k, area);
    let low = area - area_below(w.map(|v| -v), k, area);
    (below - low).max(0.0)
}

fn check_same_mesh(a: &DiscreteField, mesh: &Mesh2D) -> Result<()> {
    if a.values().len() != mesh.num_vertices() {
        return Err(Error::invalid("field is not defined on the problem mesh"));
    }
    Ok(())
}

/// Nodes violating `{u = 0} ⊂ {g = 0}` when `h(0) = ∞`.
pub fn degenerate_nodes(u: &DiscreteField, spec: &ProblemSpec) -> Result<Vec<usize>> {
    check_same_mesh(u, &spec.mesh)?;
    if !spec.h.is_singular() {
        return Ok(Vec::new());
    }
    let g = crate::assembly::boundary_weights(&spec.mesh, spec.boundary_order, |p| spec.g.eval(p))?;
    Ok(spec
        .mesh
        .boundary_vertices()
        .into_iter()
        .filter(|&i| u.values()[i] <= ZERO_TOLERANCE && g[i] > 0.0)
        .collect())
}

/// `|LHS − RHS|` of the entropy identity tested with `T_k(u − v)`, with the
/// untruncated data and nonlinearities.
pub fn entropy_residual(u: &DiscreteField, v: &DiscreteField, k: f64, spec: &ProblemSpec) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::invalid(format!("k must be positive, got {k}")));
    }
    let mesh = &spec.mesh;
    check_same_mesh(u, mesh)?;
    check_same_mesh(v, mesh)?;
    let bad = degenerate_nodes(u, spec)?;
    if !bad.is_empty() {
        return Err(Error::Inapplicable(format!("u vanishes where g > 0 at {} boundary node(s)", bad.len())));
    }
    let (uv, vv) = (u.values(), v.values());
    let d: Vec<f64> = uv.iter().zip(vv).map(|(a, b)| a - b).collect();
    let rule = triangle_rule();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let geo = mesh.geometry(t);
        let x = tri.map(|i| mesh.vertices()[i]);
        let c = [(x[0][0] + x[1][0] + x[2][0]) / 3.0, (x[0][1] + x[1][1] + x[2][1]) / 3.0];
        let dw = tri.map(|i| d[i]);
        let flux = spec.flux.flux(c[0], c[1], gradient_on(mesh, uv, t));
        let gd = gradient_on(mesh, &d, t);
        lhs += (flux[0] * gd[0] + flux[1] * gd[1]) * band_area(dw, k, geo.area);
        for (l, w) in &rule {
            let px = l[0] * x[0][0] + l[1] * x[1][0] + l[2] * x[2][0];
            let py = l[0] * x[0][1] + l[1] * x[1][1] + l[2] * x[2][1];
            let dq = l[0] * dw[0] + l[1] * dw[1] + l[2] * dw[2];
            rhs += w * geo.area * spec.f.eval(&EvalPoint::interior(px, py)) * clamp_sym(dq, k);
        }
    }
    let edge_rule = GaussLegendre::new(spec.boundary_order)?;
    for e in mesh.boundary_edges() {
        let [a, b] = e.vertices;
        for p in edge_points(mesh.vertices(), e, &edge_rule) {
            let pt = Mesh2D::boundary_eval_point(e, &p);
            let uq = (1.0 - p.t) * uv[a] + p.t * uv[b];
            let tk = clamp_sym((1.0 - p.t) * d[a] + p.t * d[b], k);
            lhs += p.weight * spec.lambda.eval(&pt) * spec.sigma.eval(uq) * tk;
            let g = spec.g.eval(&pt);
            if g != 0.0 {
                rhs += p.weight * spec.h.eval(uq.max(0.0)) * g * tk;
            }
        }
    }
    Ok((lhs - rhs).abs())
}

/// Test functions `0`, `T_1(u)`, `x` and `y`.
pub fn entropy_test_family(u: &DiscreteField) -> Vec<(String, DiscreteField)> {
    let mesh = u.mesh().clone();
    let t1 = u.values().iter().map(|v| clamp_sym(*v, 1.0)).collect();
    vec![
        ("zero".into(), DiscreteField::constant(mesh.clone(), 0.0)),
        ("T1(u)".into(), DiscreteField::new(mesh.clone(), t1).expect("truncation keeps values finite")),
        ("x".into(), DiscreteField::interpolate(mesh.clone(), |x, _| x)),
        ("y".into(), DiscreteField::interpolate(mesh, |_, y| y)),
    ]
}

/// Largest entropy residual over the test family and `ks`.
pub fn entropy_residual_max(u: &DiscreteField, spec: &ProblemSpec, ks: &[f64]) -> Result<f64> {
    let mut worst = 0.0_f64;
    for (_, v) in entropy_test_family(u) {
        for &k in ks {
            worst = worst.max(entropy_residual(u, &v, k, spec)?);
        }
    }
    Ok(worst)
}

/// `E(k) = ∫|∇T_k u|^p + ∫|T_k u|^p`.
pub fn truncation_energy(u: &DiscreteField, p: f64, k: f64) -> f64 {
    let mesh = u.mesh();
    let vals = u.values();
    let rule = triangle_rule();
    let mut e = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let geo = mesh.geometry(t);
        let w = tri.map(|i| vals[i]);
        let g = gradient_on(mesh, vals, t);
        e += g[0].hypot(g[1]).powf(p) * band_area(w, k, geo.area);
        for (l, q) in &rule {
            let uq = l[0] * w[0] + l[1] * w[1] + l[2] * w[2];
            e += q * geo.area * clamp_sym(uq, k).abs().powf(p);
        }
    }
    e
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruncationEnergy {
    pub ks: Vec<f64>,
    pub energies: Vec<f64>,
    /// `max_k E(k) / k`.
    pub constant: f64,
}

/// Default k grid: 40 log-spaced points on `[10⁻², 10²]`.
pub fn default_k_grid() -> Vec<f64> {
    log_grid(1e-2, 1e2, DEFAULT_GRID_POINTS)
}

pub fn truncation_energy_check(u: &DiscreteField, spec: &ProblemSpec, ks: &[f64]) -> Result<(TruncationEnergy, Check)> {
    check_same_mesh(u, &spec.mesh)?;
    if ks.is_empty() || ks.iter().any(|k| !(*k > 0.0)) || ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("k grid must be positive and increasing"));
    }
    let p = spec.flux.p;
    let energies: Vec<f64> = ks.iter().map(|&k| truncation_energy(u, p, k)).collect();
    let constant = ks.iter().zip(&energies).map(|(k, e)| e / k).fold(0.0, f64::max);
    let rows = ks.iter().zip(&energies).map(|(&k, &e)| CheckRow { parameter: k, measured: e, bound: constant * k }).collect();
    let check = Check::new("truncation_energy", 0.0, &spec.mesh, None).with_rows(rows, constant.is_finite());
    Ok((TruncationEnergy { ks: ks.to_vec(), energies, constant }, check))
}

/// Default threshold grid for the absorption estimate: `count` log-spaced
/// points from `max u / 10³` to `max u`.
pub fn default_t_grid(u: &DiscreteField, count: usize) -> Vec<f64> {
    let hi = u.max();
    if !(hi > 0.0) {
        return vec![1.0; count.max(1)];
    }
    log_grid(hi * 1e-3, hi, count)
}

/// `∮_{u>t} λ_n σ_n(u) ≤ ∫_{u>t} f_n + ∮_{u>t} h_n(u) g_n` at every `t`,
/// up to `rel_slack` relative to the larger side.
pub fn absorption_estimate_check(u: &DiscreteField, rp: &RegularizedProblem, ts: &[f64], rel_slack: f64) -> Result<Check> {
    let mesh = rp.mesh();
    check_same_mesh(u, mesh)?;
    if ts.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::invalid("thresholds must be positive"));
    }
    let vals = u.values();
    let mut rows = Vec::with_capacity(ts.len());
    let mut passed = true;
    for &t in ts {
        let (mut lhs, mut rhs) = (0.0, 0.0);
        for (i, &ui) in vals.iter().enumerate() {
            if ui <= t {
                continue;
            }
            rhs += rp.load[i];
            if mesh.is_boundary(i) {
                lhs += rp.absorption_weight[i] * rp.absorption(ui);
                rhs += rp.source_weight[i] * rp.source(ui);
            }
        }
        passed &= lhs - rhs <= rel_slack * lhs.abs().max(rhs.abs());
        rows.push(CheckRow { parameter: t, measured: lhs, bound: rhs });
    }
    Ok(Check::new("absorption_estimate", rel_slack, mesh, Some(rp.level())).with_rows(rows, passed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Balance {
    /// `∮ λ_n σ_n(u)`.
    pub absorption: f64,
    /// `∮ h_n(u) g_n`.
    pub source: f64,
    /// `∫ f_n`.
    pub load: f64,
    /// `absorption − load − source`.
    pub defect: f64,
}

impl L1Balance {
    pub fn relative_defect(&self) -> f64 {
        let scale = self.absorption.abs() + self.load.abs() + self.source.abs();
        if scale == 0.0 {
            0.0
        } else {
            self.defect.abs() / scale
        }
    }
}

/// Lumped boundary integrals of a level field and their mass-balance
/// defect.
pub fn boundary_l1_balance(u: &DiscreteField, rp: &RegularizedProblem) -> Result<L1Balance> {
    let mesh = rp.mesh();
    check_same_mesh(u, mesh)?;
    let vals = u.values();
    let (mut absorption, mut source) = (0.0, 0.0);
    for i in mesh.boundary_vertices() {
        absorption += rp.absorption_weight[i] * rp.absorption(vals[i]);
        source += rp.source_weight[i] * rp.source(vals[i]);
    }
    let load: f64 = rp.load.iter().sum();
    Ok(L1Balance { absorption, source, load, defect: absorption - load - source })
}

pub fn balance_check(balance: &L1Balance, rp: &RegularizedProblem, tol: f64) -> Check {
    let row = CheckRow { parameter: rp.level(), measured: balance.relative_defect(), bound: tol };
    Check::new("mass_balance", tol, rp.mesh(), Some(rp.level())).with_rows(vec![row], balance.relative_defect() <= tol)
}

/// Whether every value lies within `factor` of the first one.
pub fn within_factor_of_first(values: &[f64], factor: f64) -> bool {
    let Some(&first) = values.first() else { return true };
    values.iter().all(|&v| v <= factor * first && v * factor >= first)
}

/// `max / min` of positive values.
pub fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}

pub fn uniformity_check(name: &str, mesh: &Mesh2D, parameters: &[f64], values: &[f64], factor: f64) -> Check {
    let rows = parameters
        .iter()
        .zip(values)
        .map(|(&p, &v)| CheckRow { parameter: p, measured: v, bound: factor * values[0] })
        .collect();
    Check::new(name, factor, mesh, None).with_rows(rows, within_factor_of_first(values, factor))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuasiNormSample {
    pub exponent: f64,
    pub thresholds: Vec<f64>,
    /// `t μ({|f| ≥ t})^{1/r}` per threshold.
    pub values: Vec<f64>,
    pub sup: f64,
}

/// `sup_t t μ({|f| ≥ t})^{1/r}` over 40 log-spaced thresholds spanning the
/// nonzero values of `|f|`.
pub fn marcinkiewicz_quasinorm(values: &[f64], measures: &[f64], r: f64) -> Result<QuasiNormSample> {
    if values.len() != measures.len() {
        return Err(Error::invalid("values and measures must align"));
    }
    if !(r > 0.0) {
        return Err(Error::invalid(format!("exponent must be positive, got {r}")));
    }
    let lo = values.iter().map(|v| v.abs()).filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if !(hi > 0.0) {
        return Ok(QuasiNormSample { exponent: r, thresholds: Vec::new(), values: Vec::new(), sup: 0.0 });
    }
    let thresholds = log_grid(lo, hi, DEFAULT_GRID_POINTS);
    let samples: Vec<f64> = thresholds
        .iter()
        .map(|&t| {
            let mu: f64 = values.iter().zip(measures).filter(|(v, _)| v.abs() >= t).map(|(_, m)| m).sum();
            t * mu.powf(1.0 / r)
        })
        .collect();
    let sup = samples.iter().copied().fold(0.0, f64::max);
    Ok(QuasiNormSample { exponent: r, thresholds, values: samples, sup })
}

/// Quasi-norms of `u` in `Ω`, of its trace on `∂Ω` and of `|∇u|`, with
/// the given exponents.
pub fn field_quasinorms(u: &DiscreteField, interior: f64, boundary: f64, gradient: f64) -> Result<[QuasiNormSample; 3]> {
    let mesh = u.mesh();
    let vals = u.values();
    let mass = mesh.lumped_mass();
    let bm = mesh.lumped_boundary_measure();
    let bv = mesh.boundary_vertices();
    let trace: Vec<f64> = bv.iter().map(|&i| vals[i]).collect();
    let trace_m: Vec<f64> = bv.iter().map(|&i| bm[i]).collect();
    let grads: Vec<f64> = (0..mesh.num_triangles()).map(|t| u.gradient(t)).map(|g| g[0].hypot(g[1])).collect();
    let areas: Vec<f64> = (0..mesh.num_triangles()).map(|t| mesh.geometry(t).area).collect();
    Ok([
        marcinkiewicz_quasinorm(vals, &mass, interior)?,
        marcinkiewicz_quasinorm(&trace, &trace_m, boundary)?,
        marcinkiewicz_quasinorm(&grads, &areas, gradient)?,
    ])
}

/// Solve the last schedule level from `u ≡ 0` and from `u ≡ 10 ×` the data
/// scale and compare the results nodewise. Refused unless σ is flagged
/// increasing and h nonincreasing.
pub fn uniqueness_crosscheck(spec: &ProblemSpec, config: &SolverConfig) -> Result<Check> {
    let level = *config.schedule.last().ok_or_else(|| Error::invalid("empty schedule"))?;
    let tol = (1e3 * config.tol_res).max(1e-8);
    let mut check = Check::new("uniqueness", tol, &spec.mesh, Some(level as f64));
    if !spec.sigma.monotone || !spec.h.monotone {
        check.status = CheckStatus::Refused("requires sigma increasing and h nonincreasing".into());
        return Ok(check);
    }
    let high = 10.0 * spec.data_scale(level as f64);
    let (a, _) = solve_cold(spec, level, 0.0, config)?;
    let (b, _) = solve_cold(spec, level, high, config)?;
    let diff = a.max_abs_diff(&b);
    Ok(check.with_rows(vec![CheckRow { parameter: high, measured: diff, bound: tol }], diff <= tol))
}
