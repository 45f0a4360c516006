use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("gamma sequence too short: need {needed} entries, have {have}")]
    InsufficientGamma { needed: usize, have: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("LP did not reach an optimum: {0}")]
    LpStatus(String),
    #[error("LP solution fails post-solve verification (max violation {0:e})")]
    LpVerification(f64),
    #[error("no admissible candidate: {0}")]
    NoCandidate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
