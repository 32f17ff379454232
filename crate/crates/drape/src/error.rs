use std::path::Path;

use thiserror::Error;

/// Failure of a command, split by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or flag values: exit status 2.
    #[error("{0}")]
    Usage(String),
    /// Unreadable or invalid inputs and failed computations: exit status 1.
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        CliError::Domain(msg.into())
    }

    /// Domain error prefixed with the file it concerns.
    pub fn at(path: &Path, msg: impl std::fmt::Display) -> Self {
        CliError::Domain(format!("{}: {msg}", path.display()))
    }
}

impl From<drape_core::Error> for CliError {
    fn from(e: drape_core::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a file name to core errors.
pub trait Context<T> {
    fn in_file(self, path: &Path) -> CliResult<T>;
}

impl<T> Context<T> for drape_core::Result<T> {
    fn in_file(self, path: &Path) -> CliResult<T> {
        self.map_err(|e| CliError::at(path, e))
    }
}
