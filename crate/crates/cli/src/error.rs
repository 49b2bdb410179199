use std::io;
use std::path::PathBuf;

use kernelflow_core::KernelError;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Malformed or inconsistent configuration; `path` locates the field.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Kernel(#[from] KernelError),

    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        RunError::Config { path: path.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        RunError::Io { path: path.into(), source }
    }

    /// 2 for configuration and input errors, 3 for numerical failures, 1 for i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config { .. } => 2,
            RunError::Kernel(e) if e.is_numerical() => 3,
            RunError::Kernel(_) => 2,
            RunError::Io { .. } => 1,
        }
    }
}

pub type RunResult<T> = std::result::Result<T, RunError>;
