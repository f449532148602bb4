use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("data quality: {0}")]
    DataQuality(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("model file {path}: {message}")]
    ModelFile { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("phase {phase}: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps an error with the pipeline phase it occurred in.
    pub fn in_phase(self, phase: &'static str) -> Self {
        match self {
            e @ Error::Phase { .. } => e,
            other => Error::Phase {
                phase,
                source: Box::new(other),
            },
        }
    }
}
