use thiserror::Error;

/// Errors surfaced by the experiment driver. Each maps to a process exit code.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] mixdp_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0} bound check(s) failed")]
    BoundFailure(usize),

    #[error("every seed diverged")]
    AllDiverged,
}

impl HarnessError {
    /// 1 validation, 2 bound failure, 3 divergence in all seeds.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::BoundFailure(_) => 2,
            HarnessError::AllDiverged => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn validation(msg: impl Into<String>) -> HarnessError {
    HarnessError::Validation(msg.into())
}
