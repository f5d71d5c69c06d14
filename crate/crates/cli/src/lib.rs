//! Configuration, data ingestion, and result files for the `signvar` binary.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Numerical(signvar::Error),
}

impl CliError {
    /// 1 for usage, configuration and input problems; 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl From<signvar::Error> for CliError {
    fn from(e: signvar::Error) -> Self {
        match e {
            signvar::Error::InvalidInput(m) | signvar::Error::InvalidRestriction(m) => CliError::Config(m),
            other => CliError::Numerical(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Exit code of a `bands` run whose `CS^q` came out empty.
pub const EXIT_EMPTY_CSQ: i32 = 3;
