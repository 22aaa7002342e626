//! Batch generation of synthetic microstructure datasets: one job file
//! and seed in, a reproducible output directory with a hashed manifest
//! out.

pub mod config;
pub mod error;
pub mod job;
pub mod output;
pub mod tasks;

pub use config::{JobFile, Task};
pub use error::{CliError, CliResult};
pub use job::{default_job_file, run_job, run_job_file, JobOptions};
pub use output::{Artifact, Manifest, RunLog, MANIFEST_FILE, RUN_LOG_FILE};
