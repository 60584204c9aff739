use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("zero weight: {0}")]
    ZeroWeight(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("infeasible auxiliary triple: {0}")]
    Infeasible(String),
    #[error("regime error: {0}")]
    Regime(String),
    #[error("region classification failed: {0}")]
    Classification(String),
}

pub type Result<T> = std::result::Result<T, Error>;
