use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("tensor modes have unequal dimensions {0:?}")]
    UnequalModes(Vec<usize>),
    #[error("materializing {requested} entries exceeds the size cap of {cap}")]
    SizeCap { requested: u128, cap: usize },
    #[error("limit exceeded: {0}")]
    LimitExceeded(String),
    #[error("non-finite value encountered{0}")]
    NonFinite(String),
    #[error("token {token} outside vocabulary of size {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("operation not supported for {0} scalars")]
    UnsupportedScalar(&'static str),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
