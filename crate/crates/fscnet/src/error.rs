use thiserror::Error;

/// Errors surfaced by the training stack.
#[derive(Debug, Error)]
pub enum FscError {
    /// Tensor shapes do not agree for the requested operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument is outside its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A forward or backward pass produced NaN/Inf.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A dataset file is missing, truncated, or malformed.
    #[error("format error in {file} at offset {offset}: {detail}")]
    Format {
        file: String,
        offset: u64,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FscError>;
