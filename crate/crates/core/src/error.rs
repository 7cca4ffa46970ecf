use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("index {index} out of range for {len} examples")]
    IndexOutOfRange { index: usize, len: usize },

    /// The requested delta is at or above delta(0), so epsilon = 0 already suffices.
    #[error("delta {delta} >= delta(0) = {delta_at_zero}; epsilon = 0 already suffices")]
    EpsilonZeroSuffices { delta: f64, delta_at_zero: f64 },

    #[error("privacy budget too small for one step")]
    BudgetTooSmall,

    #[error("diverged at step {step}: {what} is not finite")]
    Diverged { step: usize, what: &'static str },

    #[error("accounting violation: {0}")]
    Accounting(String),

    #[error("dataset: {0}")]
    Dataset(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
