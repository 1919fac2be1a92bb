use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("missing metadata: {0}")]
    MissingMetadata(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("duplicate slice at location {0} mm")]
    DuplicateSlice(f64),

    #[error("evaluator coverage: {0}")]
    Coverage(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("image codec: {0}")]
    Codec(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }
}
