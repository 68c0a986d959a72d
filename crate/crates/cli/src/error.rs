//! CLI failures and their exit codes.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Arguments parse but do not describe a runnable request.
    #[error("usage error: {0}")]
    Usage(String),

    /// A file is missing, unreadable or malformed.
    #[error("{}: {msg}", path.display())]
    Input { path: PathBuf, msg: String },

    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Engine(#[from] scoretest::Error),

    /// The computation finished but its checks failed; the report is still emitted.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn input(path: &Path, msg: impl Into<String>) -> Self {
        CliError::Input { path: path.to_path_buf(), msg: msg.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Engine(scoretest::Error::UnknownName(_)) => EXIT_USAGE,
            CliError::Input { .. } | CliError::Output { .. } => EXIT_INPUT,
            CliError::Engine(_) | CliError::Failed(_) => EXIT_NUMERIC,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
