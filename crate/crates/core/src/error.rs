use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A value-level precondition was violated (non-finite input, length
    /// mismatch, out-of-range index, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration is internally inconsistent or unsupported.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An operation was applied to a handle in the wrong state
    /// (e.g. decorating an already-decorated dataset).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Tensor shapes do not compose.
    #[error("shape error: {0}")]
    Shape(String),

    /// A persisted file is corrupt or truncated; names the offending section.
    #[error("format error in {section}: {detail}")]
    Format { section: String, detail: String },

    /// The requested metric/operation is not defined for this dataset or model.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A loss term became non-finite during training.
    #[error("training diverged at step {step}: {term} is non-finite")]
    TrainingDivergence { step: u64, term: String },

    /// A training run finished without reaching its required target.
    #[error("training failure: {0}")]
    TrainingFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn format(section: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            section: section.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
