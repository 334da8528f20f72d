//! Command-line front end: motion estimation over event files, synthetic data, evaluation
//! and a loss sweep.

pub mod args;
pub mod commands;
pub mod pipeline;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::{BenchArgs, EvalArgs, FlowArgs, SynthArgs};
pub use args::SolveArgs;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Io(#[from] contrast_bnb::io::IoError),
    #[error(transparent)]
    Solver(#[from] contrast_bnb::bnb::SolverError),
    #[error(transparent)]
    Event(#[from] contrast_bnb::event::EventError),
    #[error(transparent)]
    Warp(#[from] contrast_bnb::warp::WarpError),
    #[error(transparent)]
    Loss(#[from] contrast_bnb::loss::LossError),
    #[error(transparent)]
    Synth(#[from] contrast_bnb::synth::SynthError),
    #[error(transparent)]
    Baseline(#[from] contrast_bnb::baselines::BaselineError),
    #[error("{0}")]
    Usage(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(name = "contrast-bnb", version, about = "Globally optimal contrast maximisation for event cameras")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optical flow of a sensor patch per window.
    Flow(FlowArgs),
    /// Planar (Ackermann) vehicle motion per window; needs a calibration with `l` and `d`.
    Planar(SolveArgs),
    /// Angular velocity per window.
    Rotation(SolveArgs),
    /// Generate a synthetic event stream, calibration and ground truth.
    Synth(SynthArgs),
    /// Compare a report against ground truth.
    Eval(EvalArgs),
    /// Run all six losses on one planar sequence.
    Bench(BenchArgs),
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Flow(a) => commands::flow(&a),
        Command::Planar(a) => commands::planar(&a),
        Command::Rotation(a) => commands::rotation(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Bench(a) => commands::bench(&a),
    }
}

/// Parses and runs an argument vector (the first item is the program name).
pub fn run_args<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}
