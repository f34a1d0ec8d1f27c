use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("unknown problem id `{id}` (valid ids: {valid})")]
    UnknownProblem { id: String, valid: String },

    #[error("point {point:?} lies outside the closed domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("problem `{0}` has no exact solution")]
    NoExactSolution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("grid has no interior nodes")]
    EmptyInterior,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("bracket [{lo}, {hi}] does not change sign")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("optimizer diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("rate undefined: {0}")]
    UndefinedRate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
