use thiserror::Error;

use crate::mdp::StateHandle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("state handle {0:?} was never returned by this simulator")]
    UnknownHandle(StateHandle),
    #[error("action {0:?} is out of range")]
    InvalidAction(Vec<usize>),
    #[error("{what} too large to enumerate ({size})")]
    TooLarge { what: &'static str, size: u128 },
    #[error("query budget of {budget} exceeded")]
    BudgetExceeded { budget: u64 },
    #[error("restart limit of {limit} exceeded")]
    RestartLimit { limit: usize },
    #[error("core element {0} has no value estimate")]
    MissingEstimate(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
