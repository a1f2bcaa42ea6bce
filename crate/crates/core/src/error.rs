use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order {order} must be smaller than the corpus length {len}")]
    OrderTooLarge { order: usize, len: usize },
    #[error("token id {0} is outside the vocabulary")]
    UnknownToken(u32),
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error("{field}: {message}")]
    InvalidArgument { field: &'static str, message: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid scenario: {path}: {message}")]
    Scenario { path: String, message: String },
    #[error("malformed event log: {0}")]
    EventLog(String),
    #[error("simulation error: {0}")]
    Simulation(String),
}

impl Error {
    pub(crate) fn arg(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            field,
            message: message.into(),
        }
    }

    pub(crate) fn scenario(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
