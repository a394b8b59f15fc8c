//! Command-line front end for the `exittime` library.
//!
//! Every command reads a TOML run configuration (see [`config::RunConfig`]),
//! writes its results into the output directory together with the effective
//! configuration, and returns one of the exit codes below.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use exittime::exit::ExitError;
use exittime::mc::McError;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Solver(_) | CliError::Io(_) => EXIT_SOLVER,
            CliError::Validation(_) => EXIT_VALIDATION,
        }
    }
}

impl From<ExitError> for CliError {
    fn from(e: ExitError) -> Self {
        match e {
            ExitError::NotPositiveDefinite(_) => CliError::Validation(e.to_string()),
            ExitError::SolverFailed { .. } | ExitError::Fem(_) => CliError::Solver(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::InvalidConfig(_) | McError::StartNotInterior(_) | McError::Dimension { .. } => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "exittime",
    version,
    about = "Mean exit times and survival functions of diffusion processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the built-in models with their parameters, domains and probes.
    Models {
        /// Print JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Print drift, diffusion matrix and derivative table of a model.
    Derive(RunArgs),
    /// Solve for the mean exit time.
    Elliptic(RunArgs),
    /// Step the survival problem in time.
    Parabolic(RunArgs),
    /// Simulate exit times and compare with the finite element mean.
    Mc(RunArgs),
    /// Run the consistency checks: SPD, maximum principle, survival
    /// monotonicity and range, survival integral, Monte Carlo agreement.
    Validate(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Run configuration (TOML).
    pub config: PathBuf,
    /// Override a configuration value, e.g. `--set mesh.divisions=20`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub set: Vec<String>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Suppress progress and result lines on stdout.
    #[arg(long, short)]
    pub quiet: bool,
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
