use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: invalid field `{field}`: {reason}")]
    MalformedRow {
        line: usize,
        field: String,
        reason: String,
    },

    #[error("empty catalog")]
    EmptyCatalog,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("non-deterministic loss closure: {first} != {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("invalid file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad inputs (as opposed to runtime failures).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MalformedRow { .. }
                | Error::EmptyCatalog
                | Error::InvalidArgument(_)
                | Error::ShapeMismatch(_)
                | Error::InsufficientHistory(_)
                | Error::Format(_)
        )
    }
}
