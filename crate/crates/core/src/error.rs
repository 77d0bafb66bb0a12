use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dataset is invalid: {0}")]
    InvalidData(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("column `{0}` is constant and cannot be used as a non-intercept term")]
    DegenerateColumn(String),

    #[error("duplicate design column label `{0}`")]
    DuplicateColumn(String),

    #[error("spline knots must be strictly increasing (got {0:?})")]
    NonIncreasingKnots(Vec<f64>),

    #[error("spline on `{column}` has only {distinct} distinct knots; at least 3 are required")]
    TooFewKnots { column: String, distinct: usize },

    #[error("invalid term: {0}")]
    InvalidTerm(String),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("design has {p} columns but only {n} rows")]
    TooManyParameters { n: usize, p: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("no convergence after {iterations} iterations (max |score| = {max_abs_score:e})")]
    NonConvergence { iterations: usize, max_abs_score: f64 },

    #[error("Jacobian is numerically singular (condition estimate {0:e})")]
    SingularJacobian(f64),

    #[error("sandwich bread matrix is singular")]
    SingularBread,

    #[error("linear predictor overflow (max {0})")]
    Overflow(f64),

    #[error("point is outside the log-binomial parameter space (max linear predictor {0:e})")]
    InfeasiblePoint(f64),

    #[error("no strictly feasible starting point found")]
    NoFeasibleStart,

    #[error("fit reached the boundary of the parameter space")]
    OnBoundary,

    #[error("non-finite value in standardization")]
    NonFiniteStandardization,

    #[error("{failed} of {total} bootstrap resamples failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("all {0} replications failed")]
    AllReplicationsFailed(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
