//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// The declared schema and the data disagree (missing columns,
    /// duplicate roles, non-contiguous time indices, ...).
    #[error("schema error: {0}")]
    Schema(String),

    /// A file could not be read or a cell could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// A learner could not be fit.
    #[error("fit error: {0}")]
    Fit(String),

    /// An estimator configuration is inconsistent or incomplete.
    #[error("config error: {0}")]
    Config(String),

    /// An estimator failed mid-recursion; `stage` names where.
    #[error("estimation error at {stage}: {message}")]
    Estimation { stage: String, message: String },

    /// Invalid command-line or programmatic arguments.
    #[error("argument error: {0}")]
    Args(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn estimation(stage: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Estimation { stage: stage.into(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
