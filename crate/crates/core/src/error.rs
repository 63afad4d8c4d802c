use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the numerical engine and the tile runtime.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("preselection removes all probability mass at the working precision (|N|^-2 = {inverse_norm_sq:e})")]
    DegeneratePreselection { inverse_norm_sq: f64 },

    #[error("table covers indices up to {available}, but {required} are required")]
    TableRange { required: usize, available: usize },

    #[error("blur margin {margin} is smaller than the kernel half-width {required}")]
    MarginTooSmall { margin: u64, required: u64 },

    #[error("missing tile ({x},{y})")]
    MissingTile { x: u64, y: u64, path: Option<PathBuf> },

    #[error("grid captured no probability mass; moments are undefined")]
    EmptyDistribution,

    #[error("malformed partial file {path}: {reason}")]
    MalformedPartial { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
