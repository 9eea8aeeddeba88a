use thiserror::Error;

use crate::grid::Cell;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cell {cell} is out of range for a grid of {total} cells")]
    Index { cell: Cell, total: usize },

    #[error("search state error: {0}")]
    State(String),

    #[error("invalid metrics: {0}")]
    Metrics(String),

    #[error("inference failed after {iterations} iterations: {reason}")]
    Inference {
        reason: String,
        iterations: usize,
        log_evidence: f64,
    },

    #[error("objective evaluation failed: {0}")]
    Objective(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
