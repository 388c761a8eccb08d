//! Crate-wide error type with a stable mapping onto CLI exit codes.

use std::fmt;

/// Every fallible operation in the crate returns this.
#[derive(Debug)]
pub enum Error {
    /// Tensor/graph shape mismatch; names both offending shapes.
    Shape(String),
    /// API misuse: wrong mode, repeated backward, non-scalar loss, bad flag combination.
    Usage(String),
    /// Configuration inconsistent with data or with itself.
    Config(String),
    /// Malformed or missing input data.
    Data(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
    /// An internal verification (e.g. a gradient check) failed.
    Check(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit-code contract: 0 success, 2 usage error, 3 data error, 4 internal check failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) | Error::Config(_) => 2,
            Error::Shape(_) | Error::Check(_) => 4,
            Error::Data(_) | Error::Io(_) => 3,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Usage(msg) => write!(f, "usage error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
            Error::Check(msg) => write!(f, "check failure: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Data(format!("json: {err}"))
    }
}
