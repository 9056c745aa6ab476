use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: record {record}: {message}")]
    Parse {
        path: PathBuf,
        record: String,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("transport error for request {fingerprint}: {message}")]
    Transport { fingerprint: String, message: String },

    #[error("capability unavailable: {0}")]
    Capability(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("axis {0} is not available in this dataset")]
    AxisUnavailable(crate::demographics::Axis),

    #[error("unknown {kind}: {id}")]
    Unknown { kind: &'static str, id: String },

    #[error("empty input: {0}")]
    Empty(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        path: impl Into<PathBuf>,
        record: impl ToString,
        message: impl ToString,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            record: record.to_string(),
            message: message.to_string(),
        }
    }

    pub(crate) fn unknown(kind: &'static str, id: impl ToString) -> Self {
        Error::Unknown {
            kind,
            id: id.to_string(),
        }
    }
}
