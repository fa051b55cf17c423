//! Command-line runner for guided diagonal bridges: ensemble sampling,
//! mean estimation, invariant verification, and plot-data extraction.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error, 3 runtime failure (non-convergence, all paths failed, I/O).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geobridge::verify::DEFAULT_SEED;
use geobridge::GeoError;

#[derive(Parser)]
#[command(
    name = "geobridge",
    version,
    about = "Guided diffusion bridges to the diagonal of a product manifold"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a bridge ensemble and write paths.csv plus summary.txt.
    SampleBridge {
        /// Run configuration file (key = value sections).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the weighted Fréchet and/or diffusion mean.
    EstimateMean {
        #[arg(long)]
        config: PathBuf,
        /// frechet | diffusion | both (overrides the config).
        #[arg(long)]
        estimator: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an invariant suite at a pinned seed.
    Verify {
        /// geometry | conditioner | brownian | bridges | estimators | all
        #[arg(long)]
        suite: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reduce a paths.csv into plot-ready CSV.
    PlotData {
        /// endpoint-density | path-trace | mean-on-diagonal
        #[arg(long)]
        kind: String,
        /// Input paths.csv produced by sample-bridge.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Path selector for the trace kinds.
        #[arg(long, default_value_t = 0)]
        path_id: u64,
        /// Histogram bins for endpoint-density.
        #[arg(long, default_value_t = 40)]
        bins: usize,
    },
    /// Print the default configuration template.
    Defaults,
}

/// Configuration and usage problems exit with 2; runtime failures with 3.
fn classify(e: &GeoError) -> u8 {
    match e {
        GeoError::InvalidInput(_) | GeoError::ManifoldMismatch(_) => 2,
        _ => 3,
    }
}

fn load_config(path: &PathBuf) -> Result<config::RunConfig, GeoError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| GeoError::InvalidInput(format!("{}: {e}", path.display())))?;
    let base = path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    config::parse_config(&text, &base)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::SampleBridge { config, out } => {
            load_config(config).and_then(|cfg| commands::cmd_sample_bridge(&cfg, out))
        }
        Command::EstimateMean {
            config,
            estimator,
            out,
        } => load_config(config).and_then(|cfg| {
            let which = match estimator {
                Some(s) => Some(config::EstimatorKind::parse(s)?),
                None => None,
            };
            commands::cmd_estimate_mean(&cfg, which, out)
        }),
        Command::Verify { suite, seed } => {
            match commands::cmd_verify(suite, seed.unwrap_or(DEFAULT_SEED)) {
                Ok(true) => Ok(()),
                Ok(false) => return ExitCode::from(1),
                Err(e) => Err(e),
            }
        }
        Command::PlotData {
            kind,
            input,
            out,
            path_id,
            bins,
        } => commands::cmd_plot_data(kind, input, out.as_deref(), *path_id, (*bins).max(1)),
        Command::Defaults => {
            print!("{}", config::defaults_text());
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(classify(&e))
        }
    }
}
