use thiserror::Error;

/// Error type shared by every module in this crate.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A caller violated an operation's contract (shape mismatch, empty
    /// context, label out of range, k larger than the index, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A kernel produced or received a NaN/Inf value.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A dataset failed ingestion or encoding validation.
    #[error("dataset rejected: {0}")]
    DataRejected(String),

    /// Checkpoint serialization/deserialization failure.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;

/// Shorthand for contract violations.
pub(crate) fn contract(msg: impl Into<String>) -> CoreError {
    CoreError::Contract(msg.into())
}
