//! Job files: `{"task", "seed", "replicates", "params"}` with a
//! task-specific `params` block.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Crack,
    Sem,
    Boolean,
    Milling,
    Segment,
    /// Generate, segment and score (the pipeline).
    Eval,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Crack => "crack",
            Task::Sem => "sem",
            Task::Boolean => "boolean",
            Task::Milling => "milling",
            Task::Segment => "segment",
            Task::Eval => "eval",
        }
    }
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobFile {
    /// Must match the subcommand when present.
    #[serde(default)]
    pub task: Option<Task>,
    /// Used when `--seed` is not given.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl JobFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let file: JobFile = serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        if file.replicates == 0 {
            return Err(CliError::Schema("replicates must be at least 1".into()));
        }
        Ok(file)
    }
}

/// Missing or null `params` means all defaults.
pub fn parse_params<T: DeserializeOwned + Default>(value: &serde_json::Value) -> CliResult<T> {
    if value.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(value.clone()).map_err(|e| CliError::Schema(format!("params: {e}")))
}

pub fn check_dims(dims: [usize; 3], spacing_um: [f64; 3]) -> CliResult<()> {
    if dims.contains(&0) {
        return Err(CliError::Schema(format!("dims must be positive, got {dims:?}")));
    }
    if !spacing_um.iter().all(|s| *s > 0.0 && s.is_finite()) {
        return Err(CliError::Schema(format!("spacing_um must be positive, got {spacing_um:?}")));
    }
    Ok(())
}

pub fn voxel_count(dims: [usize; 3]) -> u128 {
    dims.iter().map(|&n| n as u128).product()
}
