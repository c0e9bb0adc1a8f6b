use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BarmaError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("singular: {0}")]
    Singular(String),
    #[error("no convergence after {iterations} iterations in {what}")]
    NoConvergence { what: String, iterations: usize },
    #[error("sampler failure: {0}")]
    Sampler(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
}

impl BarmaError {
    /// Whether the error stems from numerics rather than invalid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            BarmaError::NonFinite(_)
                | BarmaError::Singular(_)
                | BarmaError::NoConvergence { .. }
                | BarmaError::Sampler(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, BarmaError>;
