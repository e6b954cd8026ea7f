use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed scan {path}: {len} bytes is not a multiple of 16")]
    MalformedScan { path: PathBuf, len: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("backward pass: {0}")]
    Backward(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("{0}")]
    Dataset(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
