//! Batch driver: convergence studies and time-dependent runs from a flat
//! `key = value` configuration file.
//!
//! Exit codes: 0 success, 1 a convergence rate below 0.8, 2 configuration
//! error, 3 solver or output failure.

mod commands;
mod config;
mod error;
mod setup;
mod vtk;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Status;
use crate::config::{PathChoice, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "msmfe",
    version,
    about = "Mixed finite element solver for 2D Biot poroelasticity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error table and observed rates over uniform refinements.
    Converge(Common),
    /// Time-dependent run with VTK snapshots and per-step diagnostics.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file.
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solver: reduced, full, or both (reduced, cross-checked against full).
    #[arg(long)]
    path: Option<String>,
    /// Relative residual tolerance of the iterative solver.
    #[arg(long)]
    tol: Option<f64>,
    /// Number of refinement levels.
    #[arg(long)]
    levels: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, CliError> {
        let path = self.path.as_deref().map(str::parse::<PathChoice>).transpose()?;
        RunConfig::from_file(&self.config)?.with_flags(self.out.clone(), path, self.tol, self.levels)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    msmfe_core::init_thread_pool();
    let result = match &cli.command {
        Command::Converge(c) => c.load().and_then(|cfg| commands::converge(&cfg)),
        Command::Run(c) => c.load().and_then(|cfg| commands::run(&cfg)),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::RateBelowThreshold) => ExitCode::from(1),
        Err(e) => {
            eprintln!("msmfe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
