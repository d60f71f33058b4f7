use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum SubgeoError {
    #[error("invalid function: {0}")]
    InvalidFunction(String),

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state count {got} exceeds the exact-enumeration cap {cap}; use randomized indicator sampling (non-certified) for larger chains")]
    StateCapExceeded { got: usize, cap: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("no convergence statement possible: {0}")]
    NonConvergent(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("simulation config invalid: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, SubgeoError>;
