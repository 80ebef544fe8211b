use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("missing input {}: run `{}` first", .path.display(), .producer)]
    MissingInput { path: PathBuf, producer: &'static str },

    #[error(transparent)]
    Core(#[from] quake_core::Error),

    #[error("{}: {source}", .path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    /// 1 for bad inputs, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingInput { .. } => 1,
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Core(_) | CliError::Io { .. } => 2,
        }
    }

    pub(crate) fn message(&self) -> String {
        match self {
            CliError::Config(m) => m.clone(),
            other => other.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
