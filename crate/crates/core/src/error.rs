use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} must be at least {min}, got {got}")]
    TooFewSamples { what: &'static str, min: usize, got: usize },
    #[error("expected {expected} per-depth counts, got {got}")]
    DepthMismatch { expected: usize, got: usize },
    #[error("problem tree: {0}")]
    InvalidTree(String),
    #[error("problem `{0}` has no linear decomposition of f")]
    NotLinear(String),
    #[error("problem `{0}` has no known truth")]
    NoTruth(String),
    #[error("problem `{0}` does not support quadrature")]
    NoQuadrature(String),
    #[error("problem definition: {0}")]
    InvalidProblem(String),
    #[error("policy {policy} cannot fit a budget of {budget} draws")]
    InfeasibleBudget { policy: String, budget: u64 },
    #[error("invalid policy `{0}`")]
    InvalidPolicy(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("slope fit: {0}")]
    Fit(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("replications must be at least 2, got {0}")]
    TooFewReplications(usize),
}
