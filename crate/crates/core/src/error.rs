use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("inconsistent basis: {0}")]
    InconsistentBasis(String),

    #[error("dense tensor would need {needed} entries, budget is {budget}")]
    TooLarge { needed: u128, budget: u128 },

    #[error("shooting bracket [{lo}, {hi}] has no sign change")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("Newton polish failed after {iterations} iterations (gradient norm {grad_norm:e})")]
    PolishFailure {
        iterations: usize,
        grad_norm: f64,
        unpolished: Vec<f64>,
    },

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("dimension exhausted: {0}")]
    DimensionExhausted(String),

    #[error("adversary already finalized")]
    AlreadyFinalized,

    #[error("query budget of {0} oracle calls exhausted")]
    BudgetExhausted(usize),

    #[error("run halted by oracle: {0}")]
    Halted(String),

    #[error("inner subproblem solve failed: {0}")]
    InnerSolveFailure(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("quadratic phase diverged: gap rose for {0} consecutive steps")]
    QuadraticPhaseFailure(usize),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
