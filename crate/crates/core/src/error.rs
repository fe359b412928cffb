//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration or state field failed validation. Carries the field
    /// name so callers can surface actionable messages.
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },

    /// A delimiter-separated observation file failed to parse. `line` is the
    /// 1-based line number in the file (the header is line 1).
    #[error("parse error at {path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// Experiment configuration could not be read or contained unknown keys.
    #[error("config error: {0}")]
    Config(String),

    /// A stored artifact does not match its manifest digest.
    #[error("artifact corruption: {0}")]
    Corruption(String),

    /// A checkpoint or manifest was written by an incompatible format version.
    #[error("incompatible artifact format: found version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    /// A metric that requires ground-truth labels was asked for on an
    /// observation set that has none.
    #[error("ground truth labels are not available")]
    MissingGroundTruth,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
