//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the mining pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid band: {0}")]
    InvalidBand(String),

    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    #[error("degenerate epoch: {0}")]
    DegenerateEpoch(String),

    #[error("constraint matrix ill-conditioned (condition {cond:.3e}); increase alpha")]
    IllConditioned { cond: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("missing event '{0}'")]
    MissingEvent(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
