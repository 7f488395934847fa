use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("no lattice sites survive (epsilon = {epsilon})")]
    EmptyLattice { epsilon: f64 },

    #[error("lattice is disconnected: {components} components after pruning")]
    DisconnectedLattice { components: usize },

    #[error("no nonnegative jump probabilities satisfy the reflection constraints at site {coords:?}")]
    InfeasibleBoundary { coords: Vec<i64> },

    #[error("nearest boundary point search did not converge from {point:?} (last step {last_step:e})")]
    NearestPointDiverged { point: Vec<f64>, last_step: f64 },

    #[error("eigensolver did not converge after {iterations} iterations; residuals {residuals:?}")]
    EigenConvergence { iterations: usize, residuals: Vec<f64> },

    #[error("{what} needs {needed} units of work, budget is {budget}")]
    Budget { what: &'static str, needed: u64, budget: u64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
