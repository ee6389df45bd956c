use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid curve `{id}`: {reason}")]
    InvalidCurve { id: String, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown token `{0}`")]
    UnknownToken(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("pair mode requires all curves on one token pair, found {0}")]
    NotSinglePair(String),

    #[error("infeasible routing: {0}")]
    InfeasibleRouting(String),
}

impl Error {
    pub(crate) fn curve(id: &str, reason: impl Into<String>) -> Self {
        Error::InvalidCurve {
            id: id.to_string(),
            reason: reason.into(),
        }
    }
}
