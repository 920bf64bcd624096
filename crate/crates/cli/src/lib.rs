//! File formats, report assembly and subcommand implementations for the
//! `freerep` binary.

pub mod commands;
pub mod io;
pub mod report;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("io: {0}")]
    Io(String),
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] freerep_core::Error),
}

impl CliError {
    /// Process exit code: budget overruns map to 2 like undecided verdicts,
    /// everything else to 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(freerep_core::Error::Budget(_)) => 2,
            _ => 1,
        }
    }
}
