use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid hex input: {0}")]
    InvalidHex(String),

    #[error("schema error at {path}: {reason}")]
    Schema { path: String, reason: String },

    #[error("label file {file}, row {row}: {reason}")]
    Labels {
        file: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("empty corpus: nothing to learn from")]
    EmptyCorpus,

    #[error("query has no instructions")]
    EmptyQuery,

    #[error("model file error: {0}")]
    ModelFormat(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("non-finite loss at step {step} in function {function}")]
    NonFiniteLoss { step: u64, function: String },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
