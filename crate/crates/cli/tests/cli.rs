use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use robin_cli::config::parse_config;
use robin_cli::provenance::config_hash;

fn robin(args: &[&str], config: &str, dir: &Path) -> Output {
    let path = dir.join("run.cfg");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_robin"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--quiet")
        .output()
        .unwrap()
}

fn out_arg(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

/// Data rows of a CSV written by the driver, comment lines dropped.
fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

const DEMO: &str = "mesh.domain = square\nmesh.m = 8\nproblem.instance = singular_demo\nsolver.n_max = 256\n";

#[test]
fn config_errors_exit_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = robin(&["solve"], "", dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing required keys: mesh.domain, mesh.m, problem.instance"), "{stderr}");

    let bad = "mesh.domain = square\nmesh.m = 4\nproblem.instance = custom\nproblem.mode = general\nflux.p = 2.5\n\
               data.f = constant(1)\ndata.lambda = constant(1)\ndata.g = constant(1)\nh.eta = -1\nsolver.colour = red\n";
    let out = robin(&["solve"], bad, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 5: p must lie in (1,N)"), "{stderr}");
    assert!(stderr.contains("line 9: h.eta must be >= 0"), "{stderr}");
    assert!(stderr.contains("line 10: unknown key 'solver.colour'"), "{stderr}");
}

#[test]
fn written_config_parses_back_to_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = robin(&["solve", "--out", &out_arg(dir.path(), "a"), "--seed", "7"], DEMO, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let written = fs::read_to_string(dir.path().join("a/config.txt")).unwrap();
    let cfg = parse_config(&written).unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.to_text(), written.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect::<String>());
    assert!(written.contains(&format!("# config_sha256 {}", config_hash(&cfg))));
}

#[test]
fn verify_constant_instance_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let config = "mesh.domain = square\nmesh.m = 8\nproblem.instance = constant\nsolver.n_max = 64\n";
    let out = robin(&["verify", "--out", &out_arg(dir.path(), "v")], config, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&dir.path().join("v/rates.csv"));
    assert_eq!(table.len(), 3);
    for row in &table {
        let error: f64 = row[4].parse().unwrap();
        assert!(error <= 1e-10, "error {error}");
    }
}

#[test]
fn verify_disk_example_residual_decreases() {
    let dir = tempfile::tempdir().unwrap();
    for alpha in ["0", "0.5"] {
        let config = format!("mesh.domain = disk\nmesh.m = 16\nproblem.instance = disk_example\nproblem.alpha = {alpha}\nverify.refinements = 3\n");
        let name = format!("disk_{alpha}");
        let out = robin(&["verify", "--out", &out_arg(dir.path(), &name)], &config, dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let residuals: Vec<f64> = rows(&dir.path().join(&name).join("rates.csv")).iter().map(|r| r[4].parse().unwrap()).collect();
        assert_eq!(residuals.len(), 3);
        assert!(residuals.windows(2).all(|w| w[1] < w[0]), "{residuals:?}");
    }
}

#[test]
fn verify_rejects_instances_without_exact_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = robin(&["verify", "--out", &out_arg(dir.path(), "v")], DEMO, dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eta_sweep_on_the_demo_converges_from_level_two() {
    // at n = 1 and η = 0 the demo data supply more than the truncated
    // absorption can balance, so the ladder starts at n = 2
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{DEMO}solver.n_min = 2\nsweep.parameter = eta\nsweep.values = 0, 0.5, 1, 2\n");
    let out = robin(&["sweep", "--out", &out_arg(dir.path(), "s")], &config, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&dir.path().join("s/sweep.csv"));
    assert_eq!(table.len(), 4);
    let etas: Vec<f64> = table.iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(etas, vec![0.0, 0.5, 1.0, 2.0]);
    for row in &table {
        assert_eq!(row[3], "converged");
        assert!(dir.path().join("s").join(&row[1]).join("field.csv").exists());
    }
}

#[test]
fn level_one_without_solution_fails_with_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = robin(&["solve", "--out", &out_arg(dir.path(), "f")], &format!("{DEMO}h.eta = 0\n"), dir.path());
    assert_eq!(out.status.code(), Some(1));
    let error = fs::read_to_string(dir.path().join("f/error.txt")).unwrap();
    assert!(error.contains("level 1 has no solution"), "{error}");
    assert!(dir.path().join("f/levels.csv").exists());
    assert!(dir.path().join("f/summary.txt").exists());
}

#[test]
fn repeated_runs_write_identical_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!("{DEMO}diagnostics.structure_samples = 200\n");
    for name in ["a", "b"] {
        let out = robin(&["estimates", "--out", &out_arg(dir.path(), name), "--seed", "3"], &config, dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut compared = 0;
    for entry in fs::read_dir(dir.path().join("a")).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_string_lossy().ends_with(".csv") {
            let a = fs::read(dir.path().join("a").join(&name)).unwrap();
            let b = fs::read(dir.path().join("b").join(&name)).unwrap();
            assert!(a == b, "{name:?} differs");
            compared += 1;
        }
    }
    assert!(compared >= 6);
}

#[test]
fn every_artifact_starts_with_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let config = "mesh.domain = square\nmesh.m = 4\nproblem.instance = affine\nsolver.n_max = 16\n";
    let out = robin(&["solve", "--out", &out_arg(dir.path(), "p")], config, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let hash = config_hash(&parse_config(config).unwrap());
    for name in ["mesh.txt", "iterations.csv", "levels.csv", "field.csv", "data_g.csv", "summary.txt", "config.txt"] {
        let text = fs::read_to_string(dir.path().join("p").join(name)).unwrap();
        let head: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
        assert!(head.iter().any(|l| l.contains(&hash)), "{name}");
        assert!(head.iter().any(|l| l.contains("V=25 T=32")), "{name}");
        assert!(head.iter().any(|l| l.contains("tol_res=")), "{name}");
    }
    let vtk = fs::read_to_string(dir.path().join("p/field.vtk")).unwrap();
    assert!(vtk.lines().nth(1).unwrap().contains(&hash));
    let mesh = robin_fem::io::read_mesh(std::io::BufReader::new(fs::File::open(dir.path().join("p/mesh.txt")).unwrap())).unwrap();
    assert_eq!(mesh.num_vertices(), 25);
}

#[test]
fn estimates_pass_on_the_demo() {
    let dir = tempfile::tempdir().unwrap();
    let out = robin(&["estimates", "--out", &out_arg(dir.path(), "e")], DEMO, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = rows(&dir.path().join("e/estimates.csv"));
    let names: Vec<&str> = table.iter().map(|r| r[0].as_str()).collect();
    for name in ["absorption_estimate", "mass_balance", "truncation_energy", "uniqueness", "flux_structure", "marcinkiewicz_quasinorms"] {
        assert!(names.contains(&name), "{name}");
    }
    assert!(table.iter().all(|r| r[1] != "fail"));
}
