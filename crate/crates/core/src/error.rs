use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data; `line` is 1-based when known.
    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A value outside the support of a density or parameter domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Non-finite loss or other numeric breakdown during training or evaluation.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("scale solver failed: {0}")]
    Solver(String),

    #[error("incompatible artifact: {0}")]
    Incompatible(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            Error::Parse { .. } => 3,
            Error::Config(_) | Error::Incompatible(_) => 4,
            Error::Domain(_) | Error::Shape(_) | Error::Numeric(_) => 5,
            Error::Solver(_) => 6,
        }
    }
}
