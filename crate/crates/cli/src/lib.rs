//! Config-driven experiment runner for the `qbsde` library.
//!
//! Every run validates its config before any simulation, writes into
//! `<out>/<config-hash12>-<seed>/` and reports pass/fail via the exit status.

pub mod artifacts;
pub mod config;
pub mod suites;

use std::path::PathBuf;

pub use artifacts::{reproduce, run, Manifest, ReproduceOutcome, RunOptions, RunOutcome};
pub use config::{ExperimentConfig, Suite};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("{0} is locked by another run")]
    Locked(PathBuf),
    #[error(transparent)]
    Compute(#[from] qbsde::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Compute(qbsde::Error::Config(_)) => 2,
            CliError::Compute(_) => 3,
            CliError::Locked(_) | CliError::Io(_) | CliError::Format(_) => 4,
        }
    }
}
