//! The `solve`, `verify`, `estimates` and `sweep` subcommands.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use robin_fem::assembly::scaled_residual_norm;
use robin_fem::diagnostics::{
    absorption_estimate_check, balance_check, boundary_l1_balance, default_t_grid, entropy_residual_max, field_quasinorms,
    truncation_energy_check, uniformity_check, uniqueness_crosscheck, Check, CheckRow, CheckStatus, EstimateReport,
};
use robin_fem::functions::{log_grid, marcinkiewicz_exponents, DataField};
use robin_fem::io::{write_field_csv, write_level_summary_csv, write_mesh, write_report_csv, write_vtk};
use robin_fem::problem::ProblemSpec;
use robin_fem::solver::{ladder_decrease, run_ladder, solve_barrier, solve_ladder, SolveReport};
use robin_fem::{regularize, Error, Mesh2D};

use crate::build;
use crate::config::{Instance, RunConfig, SweepParameter};
use crate::provenance;

/// Exit status of a subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Failure = 1,
    Usage = 2,
}

/// Allowed nodal decrease between ladder levels and barrier slack.
const NODAL_SLACK: f64 = 1e-8;

pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Run<'_> {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out.join(name);
        let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(BufWriter::new(file))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    fn prepare(&self, command: &str, mesh: &Mesh2D) -> Result<String> {
        fs::create_dir_all(&self.out).with_context(|| format!("cannot create {}", self.out.display()))?;
        let header = provenance::header(self.cfg, command, mesh);
        self.write_text("config.txt", &format!("{}{}", provenance::comment(&header), self.cfg.to_text()))?;
        Ok(header)
    }
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

/// Artifacts and outcome of one ladder run.
pub struct SolveOutcome {
    pub spec: ProblemSpec,
    pub reports: Vec<SolveReport>,
    pub error: Option<Error>,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.error.is_none() && !self.reports.is_empty()
    }
}

fn write_solve_artifacts(run: &Run, header: &str, command: &str, outcome: &SolveOutcome, seconds: f64) -> Result<()> {
    let mesh = &outcome.spec.mesh;
    let comment = provenance::comment(header);
    let mut w = run.create("mesh.txt")?;
    w.write_all(comment.as_bytes())?;
    write_mesh(mesh, &mut w)?;
    w.flush()?;
    let mut w = run.create("iterations.csv")?;
    write_report_csv(&outcome.reports, header, &mut w)?;
    w.flush()?;
    let mut w = run.create("levels.csv")?;
    write_level_summary_csv(&outcome.reports, header, &mut w)?;
    w.flush()?;
    if let Some(last) = outcome.reports.last() {
        let mut w = run.create("field.csv")?;
        write_field_csv(&last.field, header, &mut w)?;
        w.flush()?;
        let mut w = run.create("field.vtk")?;
        write_vtk(&last.field, "u", &provenance::title(run.cfg, command, mesh), &mut w)?;
        w.flush()?;
    }
    if matches!(outcome.spec.g, DataField::Manufactured(_)) {
        write_boundary_data(run, header, &outcome.spec)?;
    }

    let mut s = String::new();
    let status = if outcome.converged() { "converged" } else { "failed" };
    let _ = writeln!(s, "status: {status}");
    let _ = writeln!(s, "instance: {}", run.cfg.instance);
    let _ = writeln!(s, "mesh: V={} T={} h={:.6e}", mesh.num_vertices(), mesh.num_triangles(), mesh.mesh_size());
    let _ = writeln!(s, "levels solved: {}", outcome.reports.len());
    if let Some(last) = outcome.reports.last() {
        let iterations: usize = outcome.reports.iter().map(|r| r.iterations).sum();
        let _ = writeln!(s, "final level: {}", last.level);
        let _ = writeln!(s, "iterations: {iterations}");
        let _ = writeln!(s, "final residual: {:.6e}", last.final_residual());
        let _ = writeln!(s, "min u: {:.6e}  max u: {:.6e}  min on boundary: {:.6e}", last.min_node, last.field.max(), last.min_boundary);
        let _ = writeln!(s, "largest decrease between levels: {:.6e}", ladder_decrease(&outcome.reports));
    }
    if let Some(e) = &outcome.error {
        let _ = writeln!(s, "error: {e}");
    }
    let _ = writeln!(s, "wall time: {seconds:.3} s");
    run.write_text("summary.txt", &format!("{}{s}", provenance::comment(header)))?;
    if let Some(e) = &outcome.error {
        run.write_text("error.txt", &format!("{}{e}\n", provenance::comment(header)))?;
    }
    Ok(())
}

/// `g` at the boundary quadrature points, for problems whose `g` is derived
/// from an exact solution.
fn write_boundary_data(run: &Run, header: &str, spec: &ProblemSpec) -> Result<()> {
    let mesh = &spec.mesh;
    let mut w = run.create("data_g.csv")?;
    w.write_all(provenance::comment(header).as_bytes())?;
    writeln!(w, "edge,x,y,nx,ny,weight,g")?;
    for (k, edge) in mesh.boundary_edges().iter().enumerate() {
        for p in mesh.boundary_quadrature(edge, spec.boundary_order)? {
            let pt = Mesh2D::boundary_eval_point(edge, &p);
            let g = spec.g.eval(&pt);
            writeln!(
                w,
                "{k},{},{},{},{},{},{}",
                sci(p.point[0]),
                sci(p.point[1]),
                sci(edge.normal[0]),
                sci(edge.normal[1]),
                sci(p.weight),
                sci(g)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn solve_into(run: &Run, command: &str) -> Result<(SolveOutcome, String)> {
    let mesh = build::mesh(run.cfg)?;
    let header = run.prepare(command, &mesh)?;
    let spec = build::spec(run.cfg, mesh)?;
    let config = build::solver_config(run.cfg);
    let start = Instant::now();
    let ladder = run_ladder(&spec, &config);
    let outcome = SolveOutcome { spec, reports: ladder.reports, error: ladder.error };
    write_solve_artifacts(run, &header, command, &outcome, start.elapsed().as_secs_f64())?;
    Ok((outcome, header))
}

pub fn run_solve(run: &Run) -> Result<Exit> {
    let (outcome, _) = solve_into(run, "solve")?;
    for r in &outcome.reports {
        run.note(format!("level {:>8}: {:>3} iterations, residual {:.3e}, min u {:.6e}", r.level, r.iterations, r.final_residual(), r.min_node));
    }
    match &outcome.error {
        None => {
            run.note(format!("artifacts in {}", run.out.display()));
            Ok(Exit::Success)
        }
        Some(e) => {
            eprintln!("solve failed: {e}");
            Ok(Exit::Failure)
        }
    }
}

struct StudyRow {
    vertices: usize,
    triangles: usize,
    h: f64,
    value: f64,
}

fn rates(rows: &[StudyRow]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for w in rows.windows(2) {
        let defined = w[0].value > 0.0 && w[1].value > 0.0;
        out.push(defined.then(|| (w[0].value / w[1].value).ln() / (w[0].h / w[1].h).ln()));
    }
    out
}

pub fn run_verify(run: &Run) -> Result<Exit> {
    let quantity = match run.cfg.instance {
        Instance::Constant | Instance::Affine => "max_nodal_error",
        Instance::DiskExample => "scaled_residual",
        other => {
            eprintln!("verify needs problem.instance = constant, affine or disk_example, got {other}");
            return Ok(Exit::Usage);
        }
    };
    let base = build::mesh(run.cfg)?;
    let header = run.prepare("verify", &base)?;
    let config = build::solver_config(run.cfg);
    let mut rows = Vec::new();
    let mut failure = None;
    for k in 0..run.cfg.verify_refinements.max(1) {
        let mesh = build::mesh_at(run.cfg, k)?;
        let exact = build::exact_field(run.cfg, mesh.clone())?.context("instance has no exact solution")?;
        let spec = build::spec(run.cfg, mesh.clone())?;
        let value = if run.cfg.instance == Instance::DiskExample {
            scaled_residual_norm(&spec, &exact)?
        } else {
            match solve_ladder(&spec, &config) {
                Ok((u, _)) => u.max_abs_diff(&exact),
                Err(e) => {
                    failure = Some(format!("refinement {k}: {e}"));
                    break;
                }
            }
        };
        run.note(format!("refinement {k}: V={} {quantity} {value:.6e}", mesh.num_vertices()));
        rows.push(StudyRow { vertices: mesh.num_vertices(), triangles: mesh.num_triangles(), h: mesh.mesh_size(), value });
    }

    let rate = rates(&rows);
    let mut w = run.create("rates.csv")?;
    w.write_all(provenance::comment(&header).as_bytes())?;
    writeln!(w, "refinement,vertices,triangles,h,{quantity},rate")?;
    for (k, (r, q)) in rows.iter().zip(&rate).enumerate() {
        let q = q.map_or(String::new(), sci);
        writeln!(w, "{k},{},{},{},{},{q}", r.vertices, r.triangles, sci(r.h), sci(r.value))?;
    }
    w.flush()?;

    let mut s = provenance::comment(&header);
    let _ = writeln!(s, "{quantity} over {} meshes", rows.len());
    for (r, q) in rows.iter().zip(&rate) {
        let q = q.map_or(String::from("-"), |q| format!("{q:.3}"));
        let _ = writeln!(s, "  h = {:.6e}  {quantity} = {:.6e}  rate = {q}", r.h, r.value);
    }
    let decreasing = rows.windows(2).all(|w| w[1].value < w[0].value);
    let _ = writeln!(s, "strictly decreasing: {}", if decreasing { "yes" } else { "no" });
    if let Some(e) = &failure {
        let _ = writeln!(s, "error: {e}");
        run.write_text("error.txt", &format!("{}{e}\n", provenance::comment(&header)))?;
    }
    run.write_text("summary.txt", &s)?;
    if let Some(e) = failure {
        eprintln!("verify failed: {e}");
        return Ok(Exit::Failure);
    }
    Ok(Exit::Success)
}

fn with_status(mut check: Check, status: CheckStatus) -> Check {
    check.status = status;
    check
}

fn estimate_checks(run: &Run, outcome: &SolveOutcome, aux: &mut Auxiliary) -> Result<EstimateReport> {
    let cfg = run.cfg;
    let d = &cfg.diagnostics;
    let spec = &outcome.spec;
    let mesh = &spec.mesh;
    let mut report = EstimateReport::default();
    if let Some(e) = &outcome.error {
        let row = CheckRow { parameter: outcome.reports.len() as f64, measured: f64::NAN, bound: f64::NAN };
        let check = Check::new("ladder_converged", 0.0, mesh, outcome.reports.last().map(|r| r.level)).with_rows(vec![row], false);
        report.push(with_status(check, CheckStatus::Fail));
        run.note(format!("ladder failed: {e}"));
    }
    let Some(last) = outcome.reports.last() else { return Ok(report) };

    let mut late_levels = Vec::new();
    let (mut absorptions, mut sources) = (Vec::new(), Vec::new());
    for r in &outcome.reports {
        let rp = regularize(spec, r.level as u64)?;
        let ts = default_t_grid(&r.field, d.t_count);
        report.push(absorption_estimate_check(&r.field, &rp, &ts, d.slack)?);
        let balance = boundary_l1_balance(&r.field, &rp)?;
        report.push(balance_check(&balance, &rp, d.slack));
        if r.level >= d.n0 as f64 {
            late_levels.push(r.level);
            absorptions.push(balance.absorption);
            sources.push(balance.source);
        }
    }

    let decrease = ladder_decrease(&outcome.reports).max(0.0);
    let row = CheckRow { parameter: outcome.reports.len() as f64, measured: decrease, bound: NODAL_SLACK };
    report.push(Check::new("ladder_monotone", NODAL_SLACK, mesh, None).with_rows(vec![row], decrease <= NODAL_SLACK));

    match solve_barrier(spec, &build::solver_config(cfg)) {
        Ok((_, c_bar)) => {
            let rows: Vec<CheckRow> =
                outcome.reports.iter().map(|r| CheckRow { parameter: r.level, measured: r.min_boundary, bound: c_bar - NODAL_SLACK }).collect();
            let passed = c_bar > 0.0 && rows.iter().all(|r| r.measured >= r.bound);
            report.push(Check::new("barrier", NODAL_SLACK, mesh, None).with_rows(rows, passed));
        }
        Err(Error::Inapplicable(why)) => report.push(with_status(Check::new("barrier", NODAL_SLACK, mesh, None), CheckStatus::Inapplicable(why))),
        Err(e) => return Err(e.into()),
    }

    let ks = log_grid(d.k_min, d.k_max, d.k_count);
    let mut constants = Vec::new();
    for r in outcome.reports.iter().filter(|r| r.level >= d.n0 as f64) {
        let (energy, _) = truncation_energy_check(&r.field, spec, &ks)?;
        for (k, e) in energy.ks.iter().zip(&energy.energies) {
            let _ = writeln!(aux.truncation, "{},{},{}", sci(r.level), sci(*k), sci(*e));
        }
        constants.push(energy.constant);
    }
    if late_levels.is_empty() {
        let why = format!("no level reached diagnostics.n0 = {}", d.n0);
        for name in ["boundary_absorption_l1", "boundary_source_l1", "truncation_energy"] {
            report.push(with_status(Check::new(name, d.factor, mesh, None), CheckStatus::Inapplicable(why.clone())));
        }
    } else {
        report.push(uniformity_check("boundary_absorption_l1", mesh, &late_levels, &absorptions, d.factor));
        report.push(uniformity_check("boundary_source_l1", mesh, &late_levels, &sources, d.factor));
        report.push(uniformity_check("truncation_energy", mesh, &late_levels, &constants, d.factor));
    }

    let entropy = Check::new("entropy_residual", d.entropy_tol, mesh, Some(last.level));
    report.push(match entropy_residual_max(&last.field, spec, &d.entropy_ks) {
        Ok(r) => entropy.with_rows(vec![CheckRow { parameter: d.entropy_ks.len() as f64, measured: r, bound: d.entropy_tol }], r <= d.entropy_tol),
        Err(Error::Inapplicable(why)) => with_status(entropy, CheckStatus::Inapplicable(why)),
        Err(e) => return Err(e.into()),
    });

    let quasi = Check::new("marcinkiewicz_quasinorms", 0.0, mesh, Some(last.level));
    report.push(match marcinkiewicz_exponents(spec.dimension, spec.flux.p) {
        Ok(ex) => {
            let samples = field_quasinorms(&last.field, ex.interior, ex.boundary, ex.gradient)?;
            for (name, s) in ["interior", "boundary", "gradient"].iter().zip(&samples) {
                for (t, v) in s.thresholds.iter().zip(&s.values) {
                    let _ = writeln!(aux.quasinorms, "{name},{},{},{}", sci(s.exponent), sci(*t), sci(*v));
                }
            }
            let rows: Vec<CheckRow> = samples.iter().map(|s| CheckRow { parameter: s.exponent, measured: s.sup, bound: f64::INFINITY }).collect();
            let finite = rows.iter().all(|r| r.measured.is_finite());
            quasi.with_rows(rows, finite)
        }
        Err(_) => with_status(
            quasi,
            CheckStatus::Inapplicable(format!("needs 1 < p < N, have p = {}, N = {}", spec.flux.p, spec.dimension)),
        ),
    });

    let mut unique_config = build::solver_config(cfg);
    unique_config.schedule = vec![last.level as u64];
    report.push(uniqueness_crosscheck(spec, &unique_config)?);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let structure = spec.flux.check_structure(&mut rng, d.structure_samples);
    let violations = structure.coercivity_violations + structure.growth_violations + structure.monotonicity_violations;
    let row = CheckRow { parameter: structure.samples as f64, measured: violations as f64, bound: 0.0 };
    report.push(Check::new("flux_structure", 0.0, mesh, None).with_rows(vec![row], structure.passed()));

    Ok(report)
}

#[derive(Default)]
struct Auxiliary {
    truncation: String,
    quasinorms: String,
}

pub fn run_estimates(run: &Run) -> Result<Exit> {
    let (outcome, header) = solve_into(run, "estimates")?;
    let mut aux = Auxiliary::default();
    let report = estimate_checks(run, &outcome, &mut aux)?;
    let comment = provenance::comment(&header);

    let mut w = run.create("estimates.csv")?;
    w.write_all(comment.as_bytes())?;
    report.write_csv(&mut w)?;
    w.flush()?;
    run.write_text("truncation_energy.csv", &format!("{comment}level,k,energy\n{}", aux.truncation))?;
    run.write_text("quasinorms.csv", &format!("{comment}set,exponent,threshold,value\n{}", aux.quasinorms))?;
    let summary = report.summary();
    run.write_text("estimates_summary.txt", &format!("{comment}{summary}"))?;
    if !run.quiet {
        print!("{summary}");
    }
    Ok(if report.all_passed() { Exit::Success } else { Exit::Failure })
}

fn apply(cfg: &RunConfig, parameter: SweepParameter, value: f64, out: &Path) -> RunConfig {
    let mut c = cfg.clone();
    match parameter {
        SweepParameter::Eta => c.eta = value,
        SweepParameter::Alpha => c.alpha = value,
        SweepParameter::P => c.p = Some(value),
        SweepParameter::NMax => c.solver.n_max = value as u64,
    }
    c.sweep_parameter = None;
    c.sweep_values.clear();
    c.output_dir = out.display().to_string();
    c
}

struct SweepPoint {
    dir: String,
    value: f64,
    outcome: Result<SolveOutcome>,
}

fn sweep_point(run: &Run, parameter: SweepParameter, index: usize, value: f64) -> SweepPoint {
    let dir = format!("{index:02}_{parameter}_{value}");
    let out = run.out.join(&dir);
    let cfg = apply(run.cfg, parameter, value, &out);
    let point = Run { cfg: &cfg, out, quiet: true };
    let outcome = solve_into(&point, "sweep").map(|(o, _)| o);
    SweepPoint { dir, value, outcome }
}

pub fn run_sweep(run: &Run) -> Result<Exit> {
    let Some(parameter) = run.cfg.sweep_parameter else {
        eprintln!("sweep needs sweep.parameter and sweep.values");
        return Ok(Exit::Usage);
    };
    let mesh = build::mesh(run.cfg)?;
    let header = run.prepare("sweep", &mesh)?;
    let indexed: Vec<(usize, f64)> = run.cfg.sweep_values.iter().copied().enumerate().collect();

    #[cfg(feature = "parallel")]
    let points: Vec<SweepPoint> = {
        use rayon::prelude::*;
        if run.cfg.solver.parallel {
            indexed.par_iter().map(|&(i, v)| sweep_point(run, parameter, i, v)).collect()
        } else {
            indexed.iter().map(|&(i, v)| sweep_point(run, parameter, i, v)).collect()
        }
    };
    #[cfg(not(feature = "parallel"))]
    let points: Vec<SweepPoint> = indexed.iter().map(|&(i, v)| sweep_point(run, parameter, i, v)).collect();

    let mut w = run.create("sweep.csv")?;
    w.write_all(provenance::comment(&header).as_bytes())?;
    writeln!(w, "index,directory,{parameter},status,levels,final_level,iterations,final_residual,min_node,min_boundary,max_node")?;
    let mut all_converged = true;
    for (i, p) in points.iter().enumerate() {
        let (status, stats) = match &p.outcome {
            Ok(o) => {
                let status = if o.converged() { "converged" } else { "failed" };
                let stats = o.reports.last().map_or_else(
                    || format!("{},,,,,,", o.reports.len()),
                    |last| {
                        let iterations: usize = o.reports.iter().map(|r| r.iterations).sum();
                        format!(
                            "{},{},{iterations},{},{},{},{}",
                            o.reports.len(),
                            sci(last.level),
                            sci(last.final_residual()),
                            sci(last.min_node),
                            sci(last.min_boundary),
                            sci(last.field.max())
                        )
                    },
                );
                (status, stats)
            }
            Err(_) => ("error", String::from("0,,,,,,")),
        };
        if status != "converged" {
            all_converged = false;
            if let Err(e) = &p.outcome {
                eprintln!("sweep point {}: {e:#}", p.dir);
            }
        }
        run.note(format!("{parameter} = {}: {status}", p.value));
        writeln!(w, "{i},{},{},{status},{stats}", p.dir, sci(p.value))?;
    }
    w.flush()?;
    Ok(if all_converged { Exit::Success } else { Exit::Failure })
}
