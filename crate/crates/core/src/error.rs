use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the mining and localization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt data: {0}")]
    Corruption(String),

    #[error("invalid tensor `{tensor}` at index {index}: {reason}")]
    Validation {
        tensor: String,
        index: usize,
        reason: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("no object found")]
    NoObjectFound,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("recall undefined: ground truth has no positive pixels")]
    UndefinedRecall,

    #[error("missing ground truth for: {}", .0.join(", "))]
    MissingGroundTruth(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
