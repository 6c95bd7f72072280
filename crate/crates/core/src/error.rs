//! Error type shared by every module.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated tensor: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("metadata error: {0}")]
    Metadata(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numeric failure at step {step}: {message}")]
    Numeric { step: usize, message: String },

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("undefined score: {0}")]
    UndefinedScore(String),

    #[error("cannot normalize: {0}")]
    Normalization(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// `1` usage/configuration, `2` data or format problems, `3` numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Numeric { .. } => 3,
            Error::Io { .. }
            | Error::Format(_)
            | Error::Truncated { .. }
            | Error::NonFinite { .. }
            | Error::Dimension(_)
            | Error::Shape(_)
            | Error::Alignment(_)
            | Error::Metadata(_)
            | Error::DegenerateDistribution(_)
            | Error::UndefinedScore(_)
            | Error::Normalization(_)
            | Error::Json(_) => 2,
        }
    }
}
