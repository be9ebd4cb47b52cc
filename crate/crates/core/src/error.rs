use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::CapExceeded(_) => 3,
            LabError::InvalidSequence(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
