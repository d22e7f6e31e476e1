use thiserror::Error;

/// Errors raised by the planning, environment, and learning layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid order: {0}")]
    InvalidOrder(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("no action available: every size is already fulfilled")]
    NoAction,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("search budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
