use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid order {order}: {reason}")]
    InvalidOrder { order: usize, reason: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("outside the closed-form regime: {0}")]
    OutOfRegime(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("learner {learner} deviates from learner 0 by {deviation:e} at a synchronous step")]
    SyncViolation { learner: usize, deviation: f64 },

    #[error("staleness {requested} exceeds the bound {max} for learner {learner}{}", event.as_ref().map(|e| format!(" at event {e}")).unwrap_or_default())]
    StalenessOverflow {
        learner: usize,
        requested: usize,
        max: usize,
        event: Option<String>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
