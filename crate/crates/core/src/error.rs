use thiserror::Error;

/// Errors raised by the model and its numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    Misaligned {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("invalid distribution: {0}")]
    InvalidSpec(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infeasible target: {0}")]
    Infeasible(String),

    #[error("empty population")]
    EmptyPopulation,
}

pub type Result<T> = std::result::Result<T, ModelError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(ModelError::Domain(msg.into()))
}
