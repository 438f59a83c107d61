//! Command line front end.
//!
//! One binary, one subcommand per pipeline stage: generate or import a
//! scene, draw split masks, train, score, render predictions, benchmark.
//! Every flag is long-form and every output file is written atomically.
//!
//! Exit codes are part of the interface: `0` success, `1` bad invocation,
//! `2` unreadable or inconsistent data, `3` numeric failure (a run that
//! diverged or produced non-finite values).

mod commands;

use std::fmt;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use mambaseg::data::DataError;
use mambaseg::metrics::MetricsError;
use mambaseg::model::{ConfigError, TrainError};

#[derive(Parser)]
#[command(
    name = "mambaseg",
    version,
    about = "Whole-image hyperspectral classification with state-space encoders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled scene
    Synth(commands::SynthArgs),
    /// Convert a raw float32 cube and label raster into a scene file
    Import(commands::ImportArgs),
    /// Draw seeded per-class train/val/test masks
    Split(commands::SplitArgs),
    /// Train on one scene and write a checkpoint plus run manifest
    Train(commands::TrainArgs),
    /// Score a checkpoint on one of the scene's masks
    Eval(commands::EvalArgs),
    /// Render the predicted class map as a PPM image
    Predict(commands::PredictArgs),
    /// Tabulate modeled GFLOPs and measured forward times
    Bench(commands::BenchArgs),
}

/// Anything a subcommand can fail with, bucketed by exit code.
#[derive(Debug)]
pub enum CliError {
    /// The invocation itself is wrong; exit 1.
    Usage(String),
    /// Files or their contents are unusable; exit 2.
    Data(String),
    /// The math broke down; exit 3.
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => write!(f, "{m}"),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> CliError {
        CliError::Usage(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> CliError {
        CliError::Data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> CliError {
        match e {
            TrainError::Config(c) => CliError::Usage(c.to_string()),
            TrainError::Invalid(m) => CliError::Data(m),
            TrainError::Diverged { .. } => CliError::Numeric(e.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Import(args) => commands::import(args),
        Command::Split(args) => commands::split(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Predict(args) => commands::predict(args),
        Command::Bench(args) => commands::bench(args),
    }
}

fn main() -> ExitCode {
    // Restore the default SIGPIPE disposition so a reader that stops early
    // (`mambaseg bench ... | head`) ends the process quietly instead of
    // panicking inside a print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return ExitCode::from(if ok { 0 } else { 1 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
