use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite entries in {0}")]
    NonFinite(String),

    #[error("unknown system `{0}` (expected one of spin2, lambda3, relax3d, relax6d)")]
    UnknownSystem(String),

    #[error("parameter {index} = {value} outside [{lower}, {upper}]")]
    OutOfDomain {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid parameter domain: {0}")]
    InvalidDomain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no control snapshot stored for iteration {0}")]
    MissingSnapshot(usize),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Whether this error stems from user input rather than a failure during
    /// the run itself.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::UnknownSystem(_)
                | Error::InvalidDomain(_)
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::Shape(_)
        )
    }
}
