use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("XES: {0}")]
    Xes(String),

    #[error("{0}")]
    Domain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("invalid model: {0}")]
    Model(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    pub(crate) fn model(message: impl Into<String>) -> Self {
        Error::Model(message.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
