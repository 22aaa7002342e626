use std::path::PathBuf;

use microforge_core::Error as CoreError;
use thiserror::Error;

pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_GENERATION: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// The job was rejected before any work started.
    #[error("invalid job: {0}")]
    Schema(String),

    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: CoreError,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => EXIT_SCHEMA,
            CliError::Stage { source, .. } if source.is_io() => EXIT_IO,
            CliError::Stage { .. } => EXIT_GENERATION,
            CliError::Io { .. } => EXIT_IO,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

/// Tags a core error with the pipeline stage it came from.
pub fn stage(stage: &'static str) -> impl FnOnce(CoreError) -> CliError {
    move |source| CliError::Stage { stage, source }
}

/// Core validation failures are configuration errors.
pub fn schema(e: CoreError) -> CliError {
    CliError::Schema(e.to_string())
}

pub type CliResult<T> = std::result::Result<T, CliError>;
