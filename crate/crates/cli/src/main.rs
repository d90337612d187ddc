//! `dci` — data-consistent stochastic inversion experiments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 missing input file,
//! 4 empty posterior, 5 dominance violation above threshold, 1 other failure.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CommandContext;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: String) -> Self {
        Self { code: 2, message }
    }

    pub fn missing_input(message: String) -> Self {
        Self { code: 3, message }
    }

    pub fn dominance(message: String) -> Self {
        Self { code: 5, message }
    }

    pub fn io(message: String) -> Self {
        Self { code: 1, message }
    }
}

impl From<dci_core::Error> for CliError {
    fn from(error: dci_core::Error) -> Self {
        let code = match &error {
            dci_core::Error::EmptyPosterior => 4,
            dci_core::Error::Dominance(_) => 5,
            dci_core::Error::InvalidInput(_)
            | dci_core::Error::DimensionMismatch { .. }
            | dci_core::Error::Unsupported(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: error.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "dci",
    version,
    about = "Data-consistent stochastic inversion: push-forward densities, \
             observation-consistent posteriors, and verification experiments"
)]
struct Cli {
    /// Path to the JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for batch model evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Quantile convention for multi-QoI observed boxes.
    #[arg(long, global = true, value_enum)]
    block_quantile: Option<config::BlockQuantileConfig>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the prior through the model and fit the push-forward KDE.
    Pushforward,
    /// Rejection-sample the posterior from persisted push-forward files.
    Posterior {
        /// Directory holding samples.csv and pushforward.json (defaults to
        /// the output directory).
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Compute mass/KL/dominance diagnostics without sampling.
    Diagnose {
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// KDE build-size convergence study.
    Converge,
    /// Compare the observation-consistent and additive-noise posteriors.
    Compare,
    /// Observed-perturbation stability oracle.
    Stability,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::config("--config <path> is required".into()))?;
    if cli.workers == 0 {
        return Err(CliError::config("--workers must be at least 1".into()));
    }
    let ctx = CommandContext {
        config_path,
        seed_override: cli.seed,
        out_override: cli.out,
        block_quantile_override: cli.block_quantile,
        workers: cli.workers,
    };
    match cli.command {
        Command::Pushforward => commands::cmd_pushforward(&ctx),
        Command::Posterior { from } => commands::cmd_posterior(&ctx, &from),
        Command::Diagnose { from } => commands::cmd_diagnose(&ctx, &from),
        Command::Converge => commands::cmd_converge(&ctx),
        Command::Compare => commands::cmd_compare(&ctx),
        Command::Stability => commands::cmd_stability(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {}", error.message);
            ExitCode::from(error.code)
        }
    }
}
