//! `fes` command-line experiment runner.
//!
//! Exit codes: 0 success, 1 internal failure, 2 configuration error,
//! 3 I/O error, 4 missing calibration, 5 degenerate calibration.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use fes_core::instrument::ComponentLibrary;

use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::{CliError, CliResult};
use crate::output::Outputs;

#[derive(Debug, Parser)]
#[command(
    name = "fes",
    version,
    about = "Fluctuation-enhanced sensing experiments"
)]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: `outputs.dir`, else `fes-out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the configured sensor and its expected spectra.
    Synth,
    /// Measure the configured gas mixture and unmix concentrations.
    FesPipeline,
    /// Fit a calibration matrix from training runs.
    Calibrate,
    /// Noise budget, DC headroom and amplifier comparison of the chain.
    Budget,
    /// Information-capacity and selectivity figures.
    Metrics,
    /// Welch PSD of a recorded time series.
    Psd(commands::SpectralArgs),
    /// Bispectrum of a recorded time series.
    Bispec(commands::SpectralArgs),
}

impl Command {
    fn needs_config(&self) -> bool {
        !matches!(self, Command::Psd(_) | Command::Bispec(_))
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<Vec<PathBuf>> {
    let start = Instant::now();
    let library = ComponentLibrary::from_env()
        .map_err(|e| CliError::Config(format!("component library: {e}")))?;
    let mut cfg = match &cli.config {
        Some(path) => config::load(path, &library)?,
        None if cli.command.needs_config() => {
            return Err(CliError::Config(
                "--config is required for this command".into(),
            ))
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.outputs.dir.clone())
        .unwrap_or_else(|| PathBuf::from("fes-out"));
    let format = cli.format.or(cfg.outputs.format).unwrap_or_default();
    let mut out = Outputs::new(dir, format);

    let envelope = match &cli.command {
        Command::Synth => commands::synth(&cfg, &mut out)?,
        Command::FesPipeline => commands::fes_pipeline(&cfg, &mut out)?,
        Command::Calibrate => commands::calibrate(&cfg, &mut out)?,
        Command::Budget => commands::budget(&cfg, &library, &mut out)?,
        Command::Metrics => commands::metrics(&cfg, &mut out)?,
        Command::Psd(args) => commands::psd(&cfg, args, &mut out)?,
        Command::Bispec(args) => commands::bispec(&cfg, args, &mut out)?,
    };
    out.finish(envelope, start.elapsed().as_secs_f64())
}
