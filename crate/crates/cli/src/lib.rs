//! Experiment runner for the `mimo-ace` estimators.
//!
//! Every subcommand reads the same flat key set from an optional JSON config
//! file (`--config`) and from flags; flags take precedence over the file,
//! which takes precedence over the built-in defaults. The resolved keys and
//! the source of each one are written to `manifest.json` next to the
//! artifacts, and the `config` object there can be passed back as a config
//! file to reproduce the run.

pub mod config;
pub mod error;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{parse_config, Command, ExperimentSpec, Format, Settings, Snr, Source};
pub use error::{CliError, Result};
pub use run::{run, RunReport};

#[derive(Debug, Parser)]
#[command(name = "mimo-ace", version, about = "Sparse VSS-NLMS MIMO channel estimation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Monte-Carlo MSE learning curves, one trace per algorithm.
    Mse(Options),
    /// BER versus SNR over a CP-OFDM link detected with the estimates.
    Ber(Options),
    /// Averaged step-size traces for several (maximal) step-sizes.
    TraceStepSize(Options),
    /// Steady-state MSE over an SNR x sparsity grid.
    Sweep(Options),
}

#[derive(Debug, Args)]
pub struct Options {
    /// Flat JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub settings: Settings,
}

impl CliCommand {
    pub fn split(&self) -> (Command, &Options) {
        match self {
            CliCommand::Mse(o) => (Command::Mse, o),
            CliCommand::Ber(o) => (Command::Ber, o),
            CliCommand::TraceStepSize(o) => (Command::TraceStepSize, o),
            CliCommand::Sweep(o) => (Command::Sweep, o),
        }
    }
}

/// Resolves the experiment for a parsed command line.
pub fn spec_from_cli(cli: &Cli) -> Result<ExperimentSpec> {
    let (command, options) = cli.command.split();
    let file = options.config.as_deref().map(Settings::from_file).transpose()?;
    parse_config(command, file.as_ref(), &options.settings)
}

pub fn execute(cli: &Cli) -> Result<RunReport> {
    let spec = spec_from_cli(cli)?;
    run(&spec)
}
