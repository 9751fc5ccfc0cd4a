use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use robin_cli::commands::{run_estimates, run_solve, run_sweep, run_verify, Exit, Run};
use robin_cli::config::parse_config;

#[derive(Parser)]
#[command(name = "robin", version, about = "Singular Robin problems with L1 data: ladders, convergence studies and estimate checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for randomized checks; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Only report errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run the regularization ladder and write the fields.
    Solve,
    /// Convergence study on an instance with a known solution.
    Verify,
    /// Run the ladder and check the a-priori estimates on it.
    Estimates,
    /// Solve over a grid of one parameter.
    Sweep,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = &cli.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(Exit::Usage as u8);
    };
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(Exit::Usage as u8);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errors) => {
            eprintln!("{}: invalid configuration", path.display());
            for e in &errors.0 {
                eprintln!("  {e}");
            }
            return ExitCode::from(Exit::Usage as u8);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.display().to_string();
    }
    let run = Run { cfg: &cfg, out: PathBuf::from(&cfg.output_dir), quiet: cli.quiet };
    let result = match cli.command {
        Command::Solve => run_solve(&run),
        Command::Verify => run_verify(&run),
        Command::Estimates => run_estimates(&run),
        Command::Sweep => run_sweep(&run),
    };
    match result {
        Ok(exit) => ExitCode::from(exit as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(Exit::Failure as u8)
        }
    }
}
