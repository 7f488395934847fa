use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = RunError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("file inventory: {path} {problem}")]
    Inventory { path: PathBuf, problem: String },

    #[error("threshold failed: {0}")]
    Threshold(String),

    #[error(transparent)]
    Core(#[from] abwalk_core::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl RunError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io { path: path.into(), source }
    }

    /// 1 for a failed check, 2 for bad configuration or inputs, 3 for an
    /// exhausted resource budget.
    pub fn exit_code(&self) -> i32 {
        use abwalk_core::Error as E;
        match self {
            RunError::Config(_) | RunError::Inventory { .. } => 2,
            RunError::Core(E::InvalidDomain(_) | E::InvalidArgument(_) | E::Parse { .. }) => 2,
            RunError::Core(E::Budget { .. }) => 3,
            _ => 1,
        }
    }
}
