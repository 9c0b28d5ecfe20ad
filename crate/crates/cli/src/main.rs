//! `beliefnet run|sweep|verify <config>`.
//!
//! Exit codes: 0 success, 1 invalid configuration, 2 runtime failure,
//! 3 failed verification.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Options;
use crate::config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "beliefnet", version, about = "Distributed non-Bayesian learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for ensemble runs (default: number of processors).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one configuration and its Monte Carlo ensemble.
    Run { config: PathBuf },
    /// Convergence time against network size.
    Sweep { config: PathBuf },
    /// Check the matrix bounds and rate-bound coverage.
    Verify { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Validation("--workers: must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("worker pool: {e}")))?;
    }
    let opts = Options {
        out: cli.out,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Run { config } => commands::cmd_run(&ExperimentConfig::load(&config)?, &opts),
        Command::Sweep { config } => commands::cmd_sweep(&ExperimentConfig::load(&config)?, &opts),
        Command::Verify { config } => commands::cmd_verify(&ExperimentConfig::load(&config)?, &opts),
    }
}
