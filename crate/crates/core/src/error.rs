use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A quantity left its mathematical domain (e.g. an unphysical covariance).
    #[error("numerical domain error: {0}")]
    NumericalDomain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("sweep refused: estimated {estimated} chain runs exceed the budget of {limit}")]
    Budget { estimated: u64, limit: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
