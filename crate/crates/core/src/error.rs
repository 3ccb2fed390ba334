use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the sensing, fusion and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no active detectors for channel")]
    NoActiveDetectors,

    #[error("empty weight row")]
    EmptyWeightRow,

    #[error("degenerate threshold: all weights are zero")]
    DegenerateThreshold,

    #[error("update on correct decision")]
    UpdateOnCorrectDecision,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed CSV: {reason}")]
    Csv { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn dims(expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// True for errors caused by the user's configuration rather than by
    /// the environment (I/O) or a runtime defect.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
