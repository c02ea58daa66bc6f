use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not symmetric positive definite ({0})")]
    SingularMatrix(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no sign change on bracket [{lo}, {hi}]")]
    Bracket { lo: f64, hi: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(
        "k = {k} exceeds the limit {limit} for the exact recursion; use the Monte Carlo estimate"
    )]
    ComplexityLimit { k: usize, limit: usize },
    #[error("degenerate estimator: {0}")]
    EstimatorDegenerate(String),
    #[error("every model in the model space failed or has zero evidence")]
    DegenerateModelSpace,
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
