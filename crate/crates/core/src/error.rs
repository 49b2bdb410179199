use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid architecture: {0}")]
    InvalidSpec(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("kernel is singular: {0}")]
    SingularKernel(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("numerical instability: {0}")]
    Instability(String),
}

impl KernelError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        KernelError::InvalidInput(msg.into())
    }

    pub(crate) fn singular(msg: impl Into<String>) -> Self {
        KernelError::SingularKernel(msg.into())
    }

    /// Whether the error comes from the numerics rather than from malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            KernelError::SingularKernel(_) | KernelError::Instability(_) | KernelError::Resource(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, KernelError>;
