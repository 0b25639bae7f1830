use thiserror::Error;

/// Errors produced by the forest, the estimators, the interval constructions
/// and the simulation harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty bag")]
    EmptyBag,
    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },
    #[error("no out-of-bag coverage; increase M")]
    NoOobCoverage,
    #[error("not enough valid residuals: need {needed}, have {have}")]
    TooFewResiduals { needed: usize, have: usize },
    #[error("singular design matrix (rank {rank} < {cols} columns)")]
    Singular { rank: usize, cols: usize },
    #[error("covariance matrix is not positive semi-definite")]
    NotPsd,
    #[error("degenerate signal: Var(m(X)) = 0")]
    DegenerateSignal,
    #[error("too many failed iterations: {failures} of {attempted}")]
    TooManyFailures { failures: usize, attempted: usize },
    #[error("model format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
