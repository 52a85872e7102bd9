//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point outside the evaluation domain: {0}")]
    EvaluationDomain(String),
    #[error("phase point is not timelike: g(u, u) = {0}")]
    NotTimelike(f64),
    #[error("unknown {kind}: {name}")]
    Unknown { kind: &'static str, name: String },
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
