use thiserror::Error;

pub type Result<T> = std::result::Result<T, QmpError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmpError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid mismatch: left has {left} points, right has {right}")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("Cholesky factorization failed: {0}")]
    Factorization(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("no posterior draws to summarize")]
    EmptyDraws,
}
