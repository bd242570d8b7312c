use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    #[error("structural model failed for subject {subject} at t = {time}: {message}")]
    Model {
        subject: String,
        time: f64,
        message: String,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Domain(_) => "domain",
            Error::Decomposition(_) => "decomposition",
            Error::Numerical { .. } => "numerical",
            Error::Model { .. } => "model",
        }
    }
}
