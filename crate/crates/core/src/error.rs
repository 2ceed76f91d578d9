use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("invalid bid pair (b1={b1}, b2={b2}): {reason}")]
    InvalidBid { b1: f64, b2: f64, reason: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("training failed: {0}")]
    Training(String),

    #[error("{0}")]
    Load(#[from] LoadError),

    #[error("config error: {0}")]
    Config(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Failures while reading a dataset from disk.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: file contains no data rows")]
    EmptyFile { path: String },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: String, column: String },

    #[error("{path}: row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric {
        path: String,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{path}: row {row}: {reason}")]
    Malformed {
        path: String,
        row: usize,
        reason: String,
    },

    #[error("schema {path}: {reason}")]
    Schema { path: String, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Param(_) | Error::Config(_) => 2,
            Error::InvalidBid { .. }
            | Error::DimensionMismatch { .. }
            | Error::Empty(_)
            | Error::Load(_)
            | Error::Io { .. } => 3,
            Error::Training(_) | Error::Experiment(_) => 4,
        }
    }
}
