use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the simulation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Weiszfeld ran out of iterations; `last` is the final iterate.
    #[error("no convergence after {iterations} iterations (last step {last_step:e})")]
    ConvergenceFailure {
        iterations: usize,
        last_step: f64,
        last: Vec<f64>,
    },

    #[error("degenerate partition: a worker received no samples after {attempts} draws")]
    DegeneratePartition { attempts: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
