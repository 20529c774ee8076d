use thiserror::Error;

/// Errors raised by the estimation and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing history: {0}")]
    MissingHistory(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("specification error: {0}")]
    Specification(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("positivity violation: probability {prob} is outside [{floor}, {ceil}]")]
    Positivity { prob: f64, floor: f64, ceil: f64 },

    #[error("policy state error: {0}")]
    PolicyState(String),

    #[error("all candidates failed to fit: {}", .0.join("; "))]
    AllCandidatesFailed(Vec<String>),

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
