use std::io;
use std::path::PathBuf;

use obsolens_core::corpus::CorpusError;
use obsolens_core::diagnostics::DiagnosticsError;
use obsolens_core::query::QueryError;
use obsolens_core::stats::StatsError;
use thiserror::Error;

use crate::session::SessionError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Corpus { path: PathBuf, source: CorpusError },
    #[error("{}: {source}", path.display())]
    Series { path: PathBuf, source: StatsError },
    #[error("config {}: {reason}", path.display())]
    Config { path: PathBuf, reason: String },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    /// 1 for anything the user can fix by changing inputs, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 2,
            CliError::Session(SessionError::Io(_)) => 2,
            _ => 1,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
