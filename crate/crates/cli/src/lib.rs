//! Command-line front end for retraction-based sub-Riemannian random walks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 every replica censored,
//! 4 I/O error, 5 acceptance threshold not met.

pub mod commands;
pub mod config;
pub mod setup;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

use crate::config::{CommandKind, ConfigLayer, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("censored: {0}")]
    Censored(String),
    #[error("threshold: {0}")]
    Threshold(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Censored(_) => 3,
            CliError::Io(_) => 4,
            CliError::Threshold(_) => 5,
        }
    }
}

impl From<srwalk::Error> for CliError {
    fn from(e: srwalk::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "srwalk", version, about = "Retraction-based random walks on sub-Riemannian manifolds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run replicas of the random walk and write paths and a summary.
    Walk(ConfigLayer),
    /// Tabulate the one-step generator against the sub-Laplacian.
    GeneratorTest(ConfigLayer),
    /// Measure the agreement order of a retraction with its oracle.
    RetractionOrder(ConfigLayer),
    /// Print the compatible / normal / torsion predicate matrix.
    ConnectionCheck(ConfigLayer),
}

pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Walk(l) => commands::cmd_walk(&ExperimentConfig::resolve(l, CommandKind::Walk)?),
        Command::GeneratorTest(l) => commands::cmd_generator_test(&ExperimentConfig::resolve(l, CommandKind::GeneratorTest)?),
        Command::RetractionOrder(l) => {
            commands::cmd_retraction_order(&ExperimentConfig::resolve(l, CommandKind::RetractionOrder)?)
        }
        Command::ConnectionCheck(l) => {
            commands::cmd_connection_check(&ExperimentConfig::resolve(l, CommandKind::ConnectionCheck)?)
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
        Ok(cli) => match execute(cli.command) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
    }
}
