//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("geometry failure: {0}")]
    Geometry(String),

    #[error("step {step} failed: {reason}")]
    StepFailure { step: usize, reason: String },

    #[error("field evaluation failed: {0}")]
    Evaluation(String),

    #[error("matrix numerically singular at row {index} (block {block})")]
    Singular { index: usize, block: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Attach a step index to an error produced inside the time loop.
    pub fn at_step(self, step: usize) -> Error {
        match self {
            Error::StepFailure { .. } => self,
            other => Error::StepFailure {
                step,
                reason: other.to_string(),
            },
        }
    }
}
