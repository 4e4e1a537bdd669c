use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("quadrature did not converge (estimate {estimate:e}, error estimate {error:e})")]
    QuadratureNonConvergence { estimate: f64, error: f64 },

    #[error("test already terminated with verdict {0}; no further observations accepted")]
    AlreadyTerminated(String),

    #[error("observation stream exhausted after {consumed} observations without a verdict")]
    StreamExhausted { consumed: u64 },

    #[error("duplicate scenario id `{0}`")]
    DuplicateScenario(String),

    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
