use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the span labeler.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (index out of range,
    /// shape disagreement, unknown label).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("tensor data length {len} does not match shape {shape:?}")]
    Shape { shape: Vec<usize>, len: usize },

    #[error("loss node must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    /// Malformed input file. `line` is 1-based; 0 means the file as a whole.
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Malformed BIO sequence; `position` is the 1-based token index.
    #[error("bad tag at position {position}: {message}")]
    Tagging { position: usize, message: String },

    #[error("missing entry for sentence id `{0}`")]
    MissingKey(String),

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
