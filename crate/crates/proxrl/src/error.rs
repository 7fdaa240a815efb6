//! Crate-wide error type.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("negative l1 threshold rho = {0}")]
    NegativeRho(f64),

    #[error("input outside the domain of the distance-generating function: {0}")]
    DomainViolation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric positive definite")]
    NonPositiveDefinite,

    #[error("feasible set is empty or inconsistent")]
    InfeasibleSet,

    #[error("no convergence after {0} iterations")]
    NonConvergence(usize),

    #[error("step size out of admissible range: {0}")]
    StepSizeOutOfRange(String),

    #[error("feature matrix is rank deficient")]
    SingularBasis,

    #[error("zero diagonal element in scaling matrix")]
    ZeroDiagonal,

    #[error("no iterates recorded")]
    EmptyHistory,

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),

    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),

    #[error("config: {0}")]
    ConfigParse(String),

    #[error("metric sets differ across configs")]
    MismatchedMetrics,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
