//! Command-line driver of the benchmark harness.
//!
//! Exit status: 0 when every internal assertion of the command held, 1 when
//! one failed, 2 on a configuration or runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use twomoment::harness::{self, Config, Manifest};

#[derive(Parser)]
#[command(name = "twomoment", version, about = "Two-moment DG radiation transport benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark problem described by a TOML config.
    Run { config: PathBuf },
    /// Spatial convergence study (sine wave or Gaussian diffusion).
    Convergence { config: PathBuf },
    /// Iteration counts of the moment-conversion solver.
    SolverBench { config: PathBuf },
    /// Maximum wave speeds of the 1D and 3D flux Jacobians.
    ScanWavespeed {
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Eddington-factor bounds for both closures.
    ScanBounds {
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Lipschitz ratios of the closure flux term.
    LipschitzScan {
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn execute(cmd: &Command) -> twomoment::Result<Manifest> {
    match cmd {
        Command::Run { config } => harness::run(&Config::from_file(config)?),
        Command::Convergence { config } => harness::run_convergence(&Config::from_file(config)?),
        Command::SolverBench { config } => harness::run_solver_bench(&Config::from_file(config)?),
        Command::ScanWavespeed { output_dir } => harness::run_scan_wavespeed(output_dir.as_deref()),
        Command::ScanBounds { output_dir } => harness::run_scan_bounds(output_dir.as_deref()),
        Command::LipschitzScan { output_dir } => harness::run_lipschitz_scan(output_dir.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(manifest) => {
            for c in &manifest.checks {
                let tag = if c.pass { "ok  " } else { "FAIL" };
                println!("{tag} {} {}", c.name, c.detail);
            }
            println!("files: {} ({:.2} s)", manifest.files.join(", "), manifest.wall_seconds);
            if manifest.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
