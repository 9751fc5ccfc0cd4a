//! Run configuration: a flat `section.key = value` file with `#` comments.
//!
//! Parsing reports every problem it finds, each tagged with the line it
//! comes from. [`RunConfig::to_text`] writes the canonical form: every key,
//! sorted, with shortest round-trip float formatting.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use robin_fem::functions::DataField;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// `None` for keys that are missing or left at their default.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [&'static str] = &[$($text),+];
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("'{other}' is not one of {}", Self::ALL.join(", "))),
                }
            }
        }
    };
}

keyword_enum!(DomainKind { Square => "square", Disk => "disk" });

keyword_enum!(
    /// Built-in problem instances, or `custom` for data given in the file.
    Instance {
        Custom => "custom",
        Constant => "constant",
        Affine => "affine",
        DiskExample => "disk_example",
        SingularBoundary => "singular_boundary",
        Barrier => "barrier",
        SingularDemo => "singular_demo",
    }
);

keyword_enum!(ModeKind { Model => "model", General => "general" });

keyword_enum!(HKind { PowerSingular => "power-singular", Bounded => "bounded", Rational => "rational" });

keyword_enum!(SolverKind { Newton => "newton", Picard => "picard" });

keyword_enum!(SweepParameter { Eta => "eta", Alpha => "alpha", P => "p", NMax => "n_max" });

/// Data field syntax: `constant(c)`, `angular(scale, alpha, center)` or
/// `point(scale, exponent, x0, y0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataSpec {
    Constant(f64),
    Angular { scale: f64, alpha: f64, center: f64 },
    Point { scale: f64, exponent: f64, x0: f64, y0: f64 },
}

impl DataSpec {
    pub fn to_field(self) -> DataField {
        match self {
            DataSpec::Constant(c) => DataField::Constant(c),
            DataSpec::Angular { scale, alpha, center } => DataField::AngularPower { scale, alpha, center },
            DataSpec::Point { scale, exponent, x0, y0 } => DataField::PointPower { scale, exponent, x0, y0 },
        }
    }
}

impl fmt::Display for DataSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataSpec::Constant(c) => write!(f, "constant({c:?})"),
            DataSpec::Angular { scale, alpha, center } => write!(f, "angular({scale:?}, {alpha:?}, {center:?})"),
            DataSpec::Point { scale, exponent, x0, y0 } => write!(f, "point({scale:?}, {exponent:?}, {x0:?}, {y0:?})"),
        }
    }
}

impl FromStr for DataSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (name, rest) = s.split_once('(').ok_or_else(|| format!("expected name(args...), got '{s}'"))?;
        let args = rest.strip_suffix(')').ok_or_else(|| format!("missing ')' in '{s}'"))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| format!("'{}' is not a number", a.trim())))
            .collect::<Result<_, _>>()?;
        let expect = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(format!("{} takes {n} arguments, got {}", name.trim(), nums.len()))
            }
        };
        match name.trim() {
            "constant" => {
                expect(1)?;
                Ok(DataSpec::Constant(nums[0]))
            }
            "angular" => {
                expect(3)?;
                Ok(DataSpec::Angular { scale: nums[0], alpha: nums[1], center: nums[2] })
            }
            "point" => {
                expect(4)?;
                Ok(DataSpec::Point { scale: nums[0], exponent: nums[1], x0: nums[2], y0: nums[3] })
            }
            other => Err(format!("unknown data field '{other}' (expected constant, angular or point)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub mode: SolverKind,
    pub tol_fp: f64,
    pub tol_res: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub lin_tol: f64,
    /// First ladder level.
    pub n_min: u64,
    pub n_max: u64,
    /// Ratio of consecutive ladder levels.
    pub schedule_base: u64,
    pub tol_ladder: f64,
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSection {
    pub k_min: f64,
    pub k_max: f64,
    pub k_count: usize,
    pub t_count: usize,
    /// Relative slack of the absorption estimate and the mass balance.
    pub slack: f64,
    /// Factor allowed between a quantity and its value at level `n0`.
    pub factor: f64,
    pub n0: u64,
    pub entropy_ks: Vec<f64>,
    pub entropy_tol: f64,
    pub structure_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: DomainKind,
    pub m: usize,
    pub refine: usize,
    pub instance: Instance,
    pub mode: ModeKind,
    pub dimension: u32,
    /// Singularity exponent of the angular weight in the disk example and
    /// the singular-boundary instance.
    pub alpha: f64,
    pub p: Option<f64>,
    pub omega_min: f64,
    pub omega_max: f64,
    pub f: Option<DataSpec>,
    pub lambda: Option<DataSpec>,
    pub g: Option<DataSpec>,
    pub sigma_q: f64,
    pub sigma_scale: f64,
    pub h_family: HKind,
    pub eta: f64,
    pub h_c1: f64,
    pub h_s2: f64,
    pub boundary_order: usize,
    pub solver: SolverSection,
    pub diagnostics: DiagnosticsSection,
    pub verify_refinements: usize,
    pub sweep_parameter: Option<SweepParameter>,
    pub sweep_values: Vec<f64>,
    pub output_dir: String,
    pub seed: u64,
}

/// Every accepted key with its default (`None`: required or optional
/// without default).
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("boundary.order", Some("4")),
    ("data.f", None),
    ("data.g", None),
    ("data.lambda", None),
    ("diagnostics.entropy_ks", Some("0.5, 1.0, 2.0")),
    ("diagnostics.entropy_tol", Some("inf")),
    ("diagnostics.factor", Some("2.0")),
    ("diagnostics.k_count", Some("40")),
    ("diagnostics.k_max", Some("100.0")),
    ("diagnostics.k_min", Some("0.01")),
    ("diagnostics.n0", Some("16")),
    ("diagnostics.slack", Some("1e-8")),
    ("diagnostics.structure_samples", Some("1000")),
    ("diagnostics.t_count", Some("10")),
    ("flux.omega_max", Some("1.0")),
    ("flux.omega_min", Some("1.0")),
    ("flux.p", None),
    ("h.c1", Some("1.0")),
    ("h.eta", Some("1.0")),
    ("h.family", Some("power-singular")),
    ("h.s2", Some("1.0")),
    ("mesh.domain", None),
    ("mesh.m", None),
    ("mesh.refine", Some("0")),
    ("output.dir", Some("out")),
    ("problem.N", Some("2")),
    ("problem.alpha", Some("0.5")),
    ("problem.instance", None),
    ("problem.mode", Some("general")),
    ("run.seed", Some("0")),
    ("sigma.q", Some("1.0")),
    ("sigma.scale", Some("1.0")),
    ("solver.damping", Some("1.0")),
    ("solver.lin_tol", Some("1e-12")),
    ("solver.max_iter", Some("100")),
    ("solver.mode", Some("newton")),
    ("solver.n_max", Some("16384")),
    ("solver.n_min", Some("1")),
    ("solver.parallel", Some("true")),
    ("solver.schedule_base", Some("2")),
    ("solver.tol_fp", Some("1e-10")),
    ("solver.tol_ladder", Some("1e-9")),
    ("solver.tol_res", Some("1e-10")),
    ("sweep.parameter", None),
    ("sweep.values", None),
    ("verify.refinements", Some("3")),
];

pub const REQUIRED: &[&str] = &["mesh.domain", "mesh.m", "problem.instance"];

/// Keys that a `custom` instance must set.
pub const CUSTOM_REQUIRED: &[&str] = &["data.f", "data.g", "data.lambda"];

struct Parser {
    raw: BTreeMap<String, (usize, String)>,
    errors: Vec<ConfigError>,
}

impl Parser {
    fn line(&self, key: &str) -> Option<usize> {
        self.raw.get(key).map(|(l, _)| *l)
    }

    fn error(&mut self, key: &str, message: impl Into<String>) {
        let message = message.into();
        let line = self.line(key);
        let message = if line.is_some() { message } else { format!("{key}: {message}") };
        self.errors.push(ConfigError { line, message });
    }

    fn text(&self, key: &str) -> Option<String> {
        if let Some((_, v)) = self.raw.get(key) {
            return Some(v.clone());
        }
        KEYS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| d.map(String::from))
    }

    fn typed<T: FromStr>(&mut self, key: &str, what: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        let text = self.text(key)?;
        match text.parse::<T>() {
            Ok(v) => Some(v),
            Err(e) => {
                let detail = e.to_string();
                let detail = if detail.is_empty() || detail.starts_with("invalid") { format!("'{text}' is not {what}") } else { detail };
                self.error(key, format!("{key} expects {what}: {detail}"));
                None
            }
        }
    }

    fn float(&mut self, key: &str) -> Option<f64> {
        self.typed::<f64>(key, "a number")
    }

    fn int(&mut self, key: &str) -> Option<usize> {
        self.typed::<usize>(key, "a nonnegative integer")
    }

    fn list(&mut self, key: &str) -> Option<Vec<f64>> {
        let text = self.text(key)?;
        let mut out = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.parse::<f64>() {
                Ok(v) => out.push(v),
                Err(_) => {
                    self.error(key, format!("{key} expects a comma-separated list of numbers: '{item}' is not a number"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn require(&mut self, key: &str, ok: bool, message: &str) {
        if !ok {
            self.error(key, message.to_string());
        }
    }
}

fn split_lines(text: &str) -> (BTreeMap<String, (usize, String)>, Vec<ConfigError>) {
    let mut raw = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            errors.push(ConfigError { line: Some(ln), message: format!("expected 'section.key = value', got '{content}'") });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.iter().any(|(k, _)| *k == key) {
            errors.push(ConfigError { line: Some(ln), message: format!("unknown key '{key}'") });
            continue;
        }
        if value.is_empty() {
            errors.push(ConfigError { line: Some(ln), message: format!("{key} has no value") });
            continue;
        }
        if let Some((first, _)) = raw.get(key) {
            errors.push(ConfigError { line: Some(ln), message: format!("{key} already set on line {first}") });
            continue;
        }
        raw.insert(key.to_string(), (ln, value.to_string()));
    }
    (raw, errors)
}

/// Parse and validate a configuration, collecting every error.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let (raw, errors) = split_lines(text);
    let mut p = Parser { raw, errors };

    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|k| !p.raw.contains_key(*k)).collect();
    if !missing.is_empty() {
        p.errors.push(ConfigError { line: None, message: format!("missing required keys: {}", missing.join(", ")) });
    }

    let domain = p.typed::<DomainKind>("mesh.domain", "a domain");
    let m = p.int("mesh.m");
    let refine = p.int("mesh.refine");
    let instance = p.typed::<Instance>("problem.instance", "an instance");
    let mode = p.typed::<ModeKind>("problem.mode", "a mode");
    let dimension = p.typed::<u32>("problem.N", "a positive integer");
    let alpha = p.float("problem.alpha");
    let flux_p = if p.raw.contains_key("flux.p") { p.float("flux.p").map(Some) } else { Some(None) };
    let omega_min = p.float("flux.omega_min");
    let omega_max = p.float("flux.omega_max");
    let f = p.raw.contains_key("data.f").then(|| p.typed::<DataSpec>("data.f", "a data field"));
    let lambda = p.raw.contains_key("data.lambda").then(|| p.typed::<DataSpec>("data.lambda", "a data field"));
    let g = p.raw.contains_key("data.g").then(|| p.typed::<DataSpec>("data.g", "a data field"));
    let sigma_q = p.float("sigma.q");
    let sigma_scale = p.float("sigma.scale");
    let h_family = p.typed::<HKind>("h.family", "an h family");
    let eta = p.float("h.eta");
    let h_c1 = p.float("h.c1");
    let h_s2 = p.float("h.s2");
    let boundary_order = p.int("boundary.order");
    let solver_mode = p.typed::<SolverKind>("solver.mode", "a solver mode");
    let tol_fp = p.float("solver.tol_fp");
    let tol_res = p.float("solver.tol_res");
    let max_iter = p.int("solver.max_iter");
    let damping = p.float("solver.damping");
    let lin_tol = p.float("solver.lin_tol");
    let n_min = p.typed::<u64>("solver.n_min", "a positive integer");
    let n_max = p.typed::<u64>("solver.n_max", "a positive integer");
    let schedule_base = p.typed::<u64>("solver.schedule_base", "an integer >= 2");
    let tol_ladder = p.float("solver.tol_ladder");
    let parallel = p.typed::<bool>("solver.parallel", "true or false");
    let k_min = p.float("diagnostics.k_min");
    let k_max = p.float("diagnostics.k_max");
    let k_count = p.int("diagnostics.k_count");
    let t_count = p.int("diagnostics.t_count");
    let slack = p.float("diagnostics.slack");
    let factor = p.float("diagnostics.factor");
    let n0 = p.typed::<u64>("diagnostics.n0", "a positive integer");
    let entropy_ks = p.list("diagnostics.entropy_ks");
    let entropy_tol = p.float("diagnostics.entropy_tol");
    let structure_samples = p.int("diagnostics.structure_samples");
    let verify_refinements = p.int("verify.refinements");
    let sweep_parameter = p.raw.contains_key("sweep.parameter").then(|| p.typed::<SweepParameter>("sweep.parameter", "a sweep parameter"));
    let sweep_values = if p.raw.contains_key("sweep.values") { p.list("sweep.values") } else { Some(Vec::new()) };
    let output_dir = p.text("output.dir");
    let seed = p.typed::<u64>("run.seed", "a nonnegative integer");

    // Constraints, checked on whatever parsed.
    if let (Some(d), Some(m)) = (domain, m) {
        match d {
            DomainKind::Square => p.require("mesh.m", m >= 1, "mesh.m must be at least 1"),
            DomainKind::Disk => p.require("mesh.m", m >= 4, "mesh.m must be at least 4 on the disk"),
        }
    }
    if let Some(r) = refine {
        p.require("mesh.refine", r <= 8, "mesh.refine must be at most 8");
    }
    if let Some(n) = dimension {
        p.require("problem.N", n >= 2, "problem.N must be at least 2");
    }
    if let Some(a) = alpha {
        p.require("problem.alpha", (0.0..1.0).contains(&a), "problem.alpha must lie in [0,1)");
    }
    if let Some(e) = eta {
        p.require("h.eta", e >= 0.0 && e.is_finite(), "h.eta must be >= 0");
    }
    for (key, v) in [("sigma.q", sigma_q), ("sigma.scale", sigma_scale), ("h.c1", h_c1), ("h.s2", h_s2), ("flux.omega_min", omega_min)] {
        if let Some(v) = v {
            p.require(key, v > 0.0 && v.is_finite(), &format!("{key} must be positive"));
        }
    }
    if let (Some(lo), Some(hi)) = (omega_min, omega_max) {
        p.require("flux.omega_max", hi >= lo && hi.is_finite(), "flux.omega_max must be >= flux.omega_min");
    }
    if let Some(o) = boundary_order {
        p.require("boundary.order", (1..=8).contains(&o), "boundary.order must lie in 1..=8");
    }
    for (key, v) in [
        ("solver.tol_fp", tol_fp),
        ("solver.tol_res", tol_res),
        ("solver.lin_tol", lin_tol),
        ("solver.tol_ladder", tol_ladder),
        ("diagnostics.k_min", k_min),
    ] {
        if let Some(v) = v {
            p.require(key, v > 0.0 && v.is_finite(), &format!("{key} must be positive"));
        }
    }
    if let Some(d) = damping {
        p.require("solver.damping", d > 0.0 && d <= 1.0, "solver.damping must lie in (0,1]");
    }
    if let Some(i) = max_iter {
        p.require("solver.max_iter", i >= 1, "solver.max_iter must be at least 1");
    }
    if let Some(n) = n_max {
        p.require("solver.n_max", n >= 1, "solver.n_max must be at least 1");
    }
    if let Some(n) = n_min {
        p.require("solver.n_min", n >= 1 && n <= n_max.unwrap_or(u64::MAX), "solver.n_min must lie in 1..=solver.n_max");
    }
    if let Some(b) = schedule_base {
        p.require("solver.schedule_base", b >= 2, "solver.schedule_base must be at least 2");
    }
    if let (Some(lo), Some(hi)) = (k_min, k_max) {
        p.require("diagnostics.k_max", hi > lo && hi.is_finite(), "diagnostics.k_max must exceed diagnostics.k_min");
    }
    if let Some(c) = k_count {
        p.require("diagnostics.k_count", c >= 2, "diagnostics.k_count must be at least 2");
    }
    if let Some(c) = t_count {
        p.require("diagnostics.t_count", c >= 1, "diagnostics.t_count must be at least 1");
    }
    if let Some(s) = slack {
        p.require("diagnostics.slack", s >= 0.0 && s.is_finite(), "diagnostics.slack must be >= 0");
    }
    if let Some(f) = factor {
        p.require("diagnostics.factor", f >= 1.0 && f.is_finite(), "diagnostics.factor must be >= 1");
    }
    if let Some(n) = n0 {
        p.require("diagnostics.n0", n >= 1, "diagnostics.n0 must be at least 1");
    }
    if let Some(ks) = &entropy_ks {
        let ok = !ks.is_empty() && ks.iter().all(|k| *k > 0.0 && k.is_finite());
        p.require("diagnostics.entropy_ks", ok, "diagnostics.entropy_ks must be a nonempty list of positive numbers");
    }
    if let Some(t) = entropy_tol {
        p.require("diagnostics.entropy_tol", t >= 0.0, "diagnostics.entropy_tol must be >= 0");
    }

    let n = dimension.unwrap_or(2) as f64;
    let p_open = |v: f64| v > 1.0 && v < n;
    if let (Some(inst), Some(mode), Some(flux_p)) = (instance, mode, flux_p) {
        match inst {
            Instance::Custom => {
                for key in CUSTOM_REQUIRED {
                    if !p.raw.contains_key(*key) {
                        p.errors.push(ConfigError { line: None, message: format!("problem.instance = custom requires {key}") });
                    }
                }
                if mode == ModeKind::Model && h_family.is_some_and(|h| h != HKind::PowerSingular) {
                    p.error("h.family", "model mode requires h.family = power-singular");
                }
                match (mode, flux_p) {
                    (ModeKind::Model, Some(v)) => p.require("flux.p", v == 2.0, "model mode requires flux.p = 2"),
                    (ModeKind::General, None) => {
                        p.errors.push(ConfigError { line: None, message: "problem.mode = general requires flux.p".into() })
                    }
                    (ModeKind::General, Some(v)) => p.require("flux.p", p_open(v), &format!("p must lie in (1,N), got p = {v}, N = {n}")),
                    (ModeKind::Model, None) => {}
                }
            }
            Instance::SingularDemo => {
                if let Some(v) = flux_p {
                    p.require("flux.p", p_open(v), &format!("p must lie in (1,N), got p = {v}, N = {n}"));
                }
            }
            _ => {
                if flux_p.is_some() {
                    p.error("flux.p", "flux.p applies only to custom and singular_demo instances");
                }
            }
        }
        if let (Instance::DiskExample, Some(DomainKind::Square)) = (inst, domain) {
            p.error("mesh.domain", "disk_example needs mesh.domain = disk");
        }
    }

    match (sweep_parameter, &sweep_values) {
        (Some(Some(param)), Some(values)) => {
            if values.is_empty() {
                p.errors.push(ConfigError { line: p.line("sweep.parameter"), message: "sweep.parameter needs sweep.values".into() });
            }
            let bad = values.iter().find(|&&v| match param {
                SweepParameter::Eta => !(v >= 0.0 && v.is_finite()),
                SweepParameter::Alpha => !(0.0..1.0).contains(&v),
                SweepParameter::P => !p_open(v),
                SweepParameter::NMax => !(v >= n_min.unwrap_or(1) as f64 && v.fract() == 0.0 && v <= 9.0e15),
            });
            if let Some(v) = bad {
                let why = match param {
                    SweepParameter::Eta => "eta must be >= 0",
                    SweepParameter::Alpha => "alpha must lie in [0,1)",
                    SweepParameter::P => "p must lie in (1,N)",
                    SweepParameter::NMax => "n_max must be an integer >= solver.n_min",
                };
                p.error("sweep.values", format!("sweep value {v}: {why}"));
            }
            if param == SweepParameter::P && !matches!(instance, Some(Instance::Custom | Instance::SingularDemo)) {
                p.error("sweep.parameter", "sweeping p needs a custom or singular_demo instance");
            }
        }
        (None, Some(values)) if !values.is_empty() => p.error("sweep.values", "sweep.values needs sweep.parameter"),
        _ => {}
    }

    if !p.errors.is_empty() {
        p.errors.sort_by_key(|e| (e.line.unwrap_or(0), e.message.clone()));
        return Err(ConfigErrors(p.errors));
    }
    // every value parsed, so the unwraps below cannot fail
    Ok(RunConfig {
        domain: domain.unwrap(),
        m: m.unwrap(),
        refine: refine.unwrap(),
        instance: instance.unwrap(),
        mode: mode.unwrap(),
        dimension: dimension.unwrap(),
        alpha: alpha.unwrap(),
        p: flux_p.unwrap(),
        omega_min: omega_min.unwrap(),
        omega_max: omega_max.unwrap(),
        f: f.flatten(),
        lambda: lambda.flatten(),
        g: g.flatten(),
        sigma_q: sigma_q.unwrap(),
        sigma_scale: sigma_scale.unwrap(),
        h_family: h_family.unwrap(),
        eta: eta.unwrap(),
        h_c1: h_c1.unwrap(),
        h_s2: h_s2.unwrap(),
        boundary_order: boundary_order.unwrap(),
        solver: SolverSection {
            mode: solver_mode.unwrap(),
            tol_fp: tol_fp.unwrap(),
            tol_res: tol_res.unwrap(),
            max_iter: max_iter.unwrap(),
            damping: damping.unwrap(),
            lin_tol: lin_tol.unwrap(),
            n_min: n_min.unwrap(),
            n_max: n_max.unwrap(),
            schedule_base: schedule_base.unwrap(),
            tol_ladder: tol_ladder.unwrap(),
            parallel: parallel.unwrap(),
        },
        diagnostics: DiagnosticsSection {
            k_min: k_min.unwrap(),
            k_max: k_max.unwrap(),
            k_count: k_count.unwrap(),
            t_count: t_count.unwrap(),
            slack: slack.unwrap(),
            factor: factor.unwrap(),
            n0: n0.unwrap(),
            entropy_ks: entropy_ks.unwrap(),
            entropy_tol: entropy_tol.unwrap(),
            structure_samples: structure_samples.unwrap(),
        },
        verify_refinements: verify_refinements.unwrap(),
        sweep_parameter: sweep_parameter.flatten(),
        sweep_values: sweep_values.unwrap(),
        output_dir: output_dir.unwrap(),
        seed: seed.unwrap(),
    })
}

fn list_text(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    /// Every key with its value, sorted by key; optional keys that are unset
    /// are left out.
    pub fn entries(&self) -> BTreeMap<&'static str, String> {
        let s = &self.solver;
        let d = &self.diagnostics;
        let mut out: BTreeMap<&'static str, String> = BTreeMap::new();
        let mut put = |k: &'static str, v: String| {
            out.insert(k, v);
        };
        put("boundary.order", self.boundary_order.to_string());
        if let Some(f) = self.f {
            put("data.f", f.to_string());
        }
        if let Some(g) = self.g {
            put("data.g", g.to_string());
        }
        if let Some(l) = self.lambda {
            put("data.lambda", l.to_string());
        }
        put("diagnostics.entropy_ks", list_text(&d.entropy_ks));
        put("diagnostics.entropy_tol", format!("{:?}", d.entropy_tol));
        put("diagnostics.factor", format!("{:?}", d.factor));
        put("diagnostics.k_count", d.k_count.to_string());
        put("diagnostics.k_max", format!("{:?}", d.k_max));
        put("diagnostics.k_min", format!("{:?}", d.k_min));
        put("diagnostics.n0", d.n0.to_string());
        put("diagnostics.slack", format!("{:?}", d.slack));
        put("diagnostics.structure_samples", d.structure_samples.to_string());
        put("diagnostics.t_count", d.t_count.to_string());
        put("flux.omega_max", format!("{:?}", self.omega_max));
        put("flux.omega_min", format!("{:?}", self.omega_min));
        if let Some(p) = self.p {
            put("flux.p", format!("{p:?}"));
        }
        put("h.c1", format!("{:?}", self.h_c1));
        put("h.eta", format!("{:?}", self.eta));
        put("h.family", self.h_family.to_string());
        put("h.s2", format!("{:?}", self.h_s2));
        put("mesh.domain", self.domain.to_string());
        put("mesh.m", self.m.to_string());
        put("mesh.refine", self.refine.to_string());
        put("output.dir", self.output_dir.clone());
        put("problem.N", self.dimension.to_string());
        put("problem.alpha", format!("{:?}", self.alpha));
        put("problem.instance", self.instance.to_string());
        put("problem.mode", self.mode.to_string());
        put("run.seed", self.seed.to_string());
        put("sigma.q", format!("{:?}", self.sigma_q));
        put("sigma.scale", format!("{:?}", self.sigma_scale));
        put("solver.damping", format!("{:?}", s.damping));
        put("solver.lin_tol", format!("{:?}", s.lin_tol));
        put("solver.max_iter", s.max_iter.to_string());
        put("solver.mode", s.mode.to_string());
        put("solver.n_max", s.n_max.to_string());
        put("solver.n_min", s.n_min.to_string());
        put("solver.parallel", s.parallel.to_string());
        put("solver.schedule_base", s.schedule_base.to_string());
        put("solver.tol_fp", format!("{:?}", s.tol_fp));
        put("solver.tol_ladder", format!("{:?}", s.tol_ladder));
        put("solver.tol_res", format!("{:?}", s.tol_res));
        if let Some(sp) = self.sweep_parameter {
            put("sweep.parameter", sp.to_string());
        }
        if !self.sweep_values.is_empty() {
            put("sweep.values", list_text(&self.sweep_values));
        }
        put("verify.refinements", self.verify_refinements.to_string());
        out
    }

    /// Canonical text: one `key = value` line per key, sorted.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Canonical text without `output.dir`, the input of the provenance
    /// hash: moving a run to another directory keeps its artifacts
    /// byte-identical.
    pub fn hashed_text(&self) -> String {
        self.entries().into_iter().filter(|(k, _)| *k != "output.dir").map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "mesh.domain = square\nmesh.m = 4\nproblem.instance = constant\n";

    #[test]
    fn reads_values_and_defaults() {
        let c = parse_config(&format!("{MINIMAL}h.eta = 1.0 # inline comment\n")).unwrap();
        assert_eq!(c.eta, 1.0);
        assert_eq!(c.solver.n_max, 16384);
        assert_eq!(c.diagnostics.entropy_ks, vec![0.5, 1.0, 2.0]);
        assert_eq!(c.diagnostics.entropy_tol, f64::INFINITY);
        assert_eq!(c.p, None);
    }

    #[test]
    fn empty_file_lists_required_keys() {
        let err = parse_config("# nothing here\n\n").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].message, "missing required keys: mesh.domain, mesh.m, problem.instance");
    }

    #[test]
    fn p_outside_the_open_interval() {
        let text = "mesh.domain = square\nmesh.m = 4\nproblem.instance = custom\nflux.p = 2.5\nproblem.N = 2\n\
                    data.f = constant(1)\ndata.lambda = constant(1)\ndata.g = constant(1)\n";
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].line, Some(4));
        assert!(err.0[0].message.starts_with("p must lie in (1,N)"));
    }

    #[test]
    fn collects_every_error_with_its_line() {
        let text = "mesh.domain = triangle\nmesh.m = four\nproblem.instance = constant\nh.eta = -1\nsolver.colour = red\nno equals sign\n";
        let err = parse_config(text).unwrap_err();
        let lines: Vec<Option<usize>> = err.0.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![Some(1), Some(2), Some(4), Some(5), Some(6)]);
        assert!(err.0[2].message.contains("h.eta must be >= 0"));
        assert!(err.0[3].message.contains("unknown key 'solver.colour'"));
    }

    #[test]
    fn data_field_syntax_round_trips() {
        for text in ["constant(1.5)", "angular(1.0, 0.5, 0.0)", "point(2.0, 0.5, 0.5, 1e-3)"] {
            let d: DataSpec = text.parse().unwrap();
            assert_eq!(d.to_string().parse::<DataSpec>().unwrap(), d);
        }
        assert!("angular(1, 2)".parse::<DataSpec>().is_err());
        assert!("spline(1)".parse::<DataSpec>().is_err());
    }

    #[test]
    fn canonical_text_round_trips() {
        let text = "problem.instance = custom\nmesh.m = 6\nmesh.domain = disk\nflux.p = 1.5\n\
                    data.f = point(1, 1, 0, 0)\ndata.lambda = constant(1)\ndata.g = angular(1, 0.3, 0)\n\
                    sweep.parameter = eta\nsweep.values = 0, 0.5, 1\nsolver.tol_res = 1e-11\n";
        let c = parse_config(text).unwrap();
        let canonical = c.to_text();
        let again = parse_config(&canonical).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_text(), canonical);
        let keys: Vec<&str> = canonical.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn sweep_values_are_checked_against_the_parameter() {
        let err = parse_config(&format!("{MINIMAL}sweep.parameter = alpha\nsweep.values = 0.2, 1.5\n")).unwrap_err();
        assert!(err.0[0].message.contains("alpha must lie in [0,1)"));
        let err = parse_config(&format!("{MINIMAL}sweep.parameter = p\nsweep.values = 1.5\n")).unwrap_err();
        assert!(err.0[0].message.contains("custom or singular_demo"));
    }
}
