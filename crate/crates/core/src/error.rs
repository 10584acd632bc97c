use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: malformed record: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}:{line}: pair references unknown video id {id}", path.display())]
    DanglingId { path: PathBuf, line: usize, id: u64 },

    #[error("{}:{line}: {field} has dimension {found}, expected {expected}", path.display())]
    DimensionMismatch {
        path: PathBuf,
        line: usize,
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("video id {id} out of range for a catalog of {n_videos} videos")]
    IdOutOfRange { id: usize, n_videos: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("configuration `{name}` failed: {source}")]
    Ablation {
        name: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem rather than of the data or configuration.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Ablation { source, .. } => source.is_io(),
            _ => false,
        }
    }

    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Ablation { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
