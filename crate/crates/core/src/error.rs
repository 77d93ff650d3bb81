use thiserror::Error;

/// Errors raised across the planning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid instance: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("limit exceeded: {what} is {actual}, cap is {cap}")]
    Limit { what: &'static str, actual: usize, cap: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("incomplete policy: {0}")]
    IncompletePolicy(String),

    #[error("internal fault: {0}")]
    Fault(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
