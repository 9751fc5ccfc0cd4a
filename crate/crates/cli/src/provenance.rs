//! Header lines that open every artifact.

use sha2::{Digest, Sha256};

use robin_fem::Mesh2D;

use crate::config::RunConfig;

/// SHA-256 of the canonical configuration text without `output.dir`.
pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.hashed_text().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance block, one fact per line, without comment markers.
pub fn header(cfg: &RunConfig, command: &str, mesh: &Mesh2D) -> String {
    let s = &cfg.solver;
    format!(
        "robin {} {command}\n\
         config_sha256 {}\n\
         instance {} mode {}\n\
         mesh domain={} m={} refine={} V={} T={} h={:.16e}\n\
         tolerances tol_fp={:.16e} tol_res={:.16e} lin_tol={:.16e} tol_ladder={:.16e} n_min={} n_max={} schedule_base={} solver={}\n\
         seed {}\n",
        env!("CARGO_PKG_VERSION"),
        config_hash(cfg),
        cfg.instance,
        cfg.mode,
        cfg.domain,
        cfg.m,
        cfg.refine,
        mesh.num_vertices(),
        mesh.num_triangles(),
        mesh.mesh_size(),
        s.tol_fp,
        s.tol_res,
        s.lin_tol,
        s.tol_ladder,
        s.n_min,
        s.n_max,
        s.schedule_base,
        s.mode,
        cfg.seed,
    )
}

/// The header as `# ` comment lines.
pub fn comment(header: &str) -> String {
    header.lines().map(|l| format!("# {l}\n")).collect()
}

/// Compact provenance for formats limited to one 256-character title line.
pub fn title(cfg: &RunConfig, command: &str, mesh: &Mesh2D) -> String {
    let s = &cfg.solver;
    format!(
        "robin {command} sha256={} m={} V={} T={} tol_res={:e} tol_ladder={:e} n_max={} seed={}",
        config_hash(cfg),
        cfg.m,
        mesh.num_vertices(),
        mesh.num_triangles(),
        s.tol_res,
        s.tol_ladder,
        s.n_max,
        cfg.seed
    )
}
