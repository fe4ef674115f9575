use thiserror::Error;

/// Errors raised across the training laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Input tensor or image does not have the shape the consumer expects.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// A target vector is not a probability distribution.
    #[error("invalid label: {0}")]
    InvalidLabel(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Label-table lookup for a bucket that was never enumerated.
    #[error("invalid bucket: {0}")]
    InvalidBucket(String),

    /// NaN or infinity reached a gradient, loss or metric.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Malformed dataset or checkpoint file.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
