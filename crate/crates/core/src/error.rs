use thiserror::Error;

/// Errors raised by the pricing engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    /// A parameter violates its domain constraint.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The correlation matrix has no real square-root factor.
    #[error("correlation matrix is not positive semidefinite (pivot {pivot} = {value:e} at row {row})")]
    NotPositiveSemidefinite { row: usize, pivot: usize, value: f64 },

    /// An argument is outside the domain of an operation.
    #[error("argument error: {0}")]
    Argument(String),

    /// A worker task panicked; the run was aborted.
    #[error("task {task_id} failed during phase {phase}: {message}")]
    TaskFailed { task_id: usize, phase: String, message: String },

    /// Serialized artifact could not be read back.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, PricingError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> PricingError {
    PricingError::InvalidParameter { name, reason: reason.into() }
}
