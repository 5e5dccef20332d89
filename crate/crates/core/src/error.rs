use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("reference image is all zero; metric undefined")]
    UndefinedReference,

    #[error("malformed header in {context}: {reason}")]
    MalformedHeader { context: String, reason: String },

    #[error("truncated payload in {context}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("trailing bytes in {context}: expected {expected} bytes, found {found}")]
    TrailingBytes {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("i/o error at {path}: {source}")]
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
}

pub(crate) fn ensure_shape(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(msg()))
    }
}
