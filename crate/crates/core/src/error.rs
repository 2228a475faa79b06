use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix not positive definite after jitter {jitter:e} (condition estimate {condition:e})")]
    NotPositiveDefinite { jitter: f64, condition: f64 },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("non-finite response {0}")]
    NonFiniteResponse(f64),

    #[error("invalid consensus matrix: {0}")]
    InvalidConsensusMatrix(String),
}

pub type Result<T> = std::result::Result<T, Error>;
