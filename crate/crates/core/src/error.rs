use thiserror::Error;

/// Errors raised by the statistical routines and the experiment harness.
#[derive(Debug, Error)]
pub enum CvmError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("length mismatch: U has {u} entries, V has {v}")]
    LengthMismatch { u: usize, v: usize },

    #[error("sample too small: need at least {min} observations, got {got}")]
    TooFewObservations { min: usize, got: usize },

    #[error("value {value} at index {index} lies outside the open unit interval")]
    OutsideUnitInterval { index: usize, value: f64 },

    #[error("field generation failed: {0}")]
    GenerationFailed(String),

    #[error("unknown weight '{0}'")]
    UnknownWeight(String),

    #[error("weight '{0}' is already registered")]
    DuplicateWeight(String),

    #[error("incomplete weight definition: {0}")]
    IncompleteWeight(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CvmError>;

pub(crate) fn invalid(msg: impl Into<String>) -> CvmError {
    CvmError::InvalidParameter(msg.into())
}
