use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition of the operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("allocation failed while storing {edges} edges")]
    Resource { edges: u64 },

    #[error("parse error at line {line} (byte {offset}): {message}")]
    Format {
        line: usize,
        offset: usize,
        message: String,
    },

    #[error("exhaustive enumeration needs {edges} long edges, limit is {limit}")]
    TooManyEdges { edges: usize, limit: usize },

    #[error("exact diameter requested on {size} vertices, threshold is {threshold}")]
    ThresholdExceeded { size: usize, threshold: usize },

    /// An exact identity failed numerically. Always a bug, never bad luck.
    #[error("identity violated: {0}")]
    IdentityViolation(String),
}

impl Error {
    pub(crate) fn format(line: usize, offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            offset,
            message: message.into(),
        }
    }
}
