use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An iterative or adaptive method failed to certify its answer. The last
    /// two iterates (or the partial value and its error estimate) are kept so
    /// callers can decide whether the result is usable.
    #[error("accuracy error in {context}: last iterates {previous:e} and {last:e}")]
    Accuracy {
        context: String,
        previous: f64,
        last: f64,
    },

    #[error("non-finite value {value} at node {node} ({context})")]
    Evaluation {
        context: String,
        node: f64,
        value: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl ChainError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        ChainError::Domain(msg.into())
    }

    pub(crate) fn dimension(msg: impl Into<String>) -> Self {
        ChainError::Dimension(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        ChainError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn accuracy(context: impl Into<String>, previous: f64, last: f64) -> Self {
        ChainError::Accuracy {
            context: context.into(),
            previous,
            last,
        }
    }

    /// True for errors that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ChainError::Accuracy { .. } | ChainError::Evaluation { .. } | ChainError::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, ChainError>;
