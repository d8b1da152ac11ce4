use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("matrix is not positive definite")]
    NonPd,
    #[error("dimension mismatch: {0}")]
    WrongDimension(String),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("prior is not covered by any sufficient condition for a uniformly optimal strategy")]
    UnsupportedPrior,
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("attention floor exceeds the budget")]
    InfeasibleFloor,
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
