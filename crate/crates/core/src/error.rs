use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the generation, filtering and evaluation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimMismatch { expected: [usize; 3], found: [usize; 3] },

    #[error("size mismatch for {path}: sidecar declares {expected} bytes, file has {found}")]
    SizeMismatch { path: PathBuf, expected: u64, found: u64 },

    #[error("unsupported dtype `{0}`")]
    UnsupportedDtype(String),

    #[error("malformed sidecar {path}: {reason}")]
    Sidecar { path: PathBuf, reason: String },

    #[error("duplicate germs {0} and {1}")]
    DuplicateGerms(usize, usize),

    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    #[error("no finite cut separates the terminal faces: {0}")]
    NoFiniteCut(String),

    #[error("force-biased packing did not converge after {iterations} iterations (max overlap {max_overlap:.3e})")]
    PackingNotConverged { iterations: usize, max_overlap: f64 },

    #[error("no voxel below air threshold {0}")]
    NoAirVoxels(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("volume too small: {0}")]
    TooSmall(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the file system rather than by inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Image { .. })
    }
}
