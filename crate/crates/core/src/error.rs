use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed matrix container at byte {offset}: {reason}")]
    Container { offset: u64, reason: String },

    #[error("CSV parse error at row {row}: {reason}")]
    Csv { row: usize, reason: String },

    /// A parse failure tagged with the file it came from.
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid metadata in {path}: {reason}")]
    Metadata { path: PathBuf, reason: String },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("WAV decode error: {0}")]
    Wav(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_file(path: impl Into<PathBuf>, source: Error) -> Self {
        Error::InFile {
            path: path.into(),
            source: Box::new(source),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True for failures caused by unreadable or malformed inputs, as opposed
    /// to failures inside a computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Container { .. }
                | Error::Csv { .. }
                | Error::InFile { .. }
                | Error::Metadata { .. }
                | Error::Manifest(_)
                | Error::Wav(_)
        )
    }
}
