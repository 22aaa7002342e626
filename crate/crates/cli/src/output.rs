//! Output directory confinement, artifact hashing and the job manifest.

use std::fs;
use std::io::Read;
use std::path::{Component, Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_LOG_FILE: &str = "run_log.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Registered artifact, relative to the output root.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// Bit-identical for identical config and seed.
    Deterministic,
    /// Contains timings; listed in the run log, not the manifest.
    Timed,
}

/// Root of a job's outputs. Every write goes through [`OutDir::path`],
/// which only accepts plain relative paths.
pub struct OutDir {
    root: PathBuf,
    files: Mutex<Vec<(String, Kind)>>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutDir { root: root.to_path_buf(), files: Mutex::new(Vec::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Absolute path for `rel`, creating parent directories. Rejects
    /// absolute paths and any `..` or prefix component.
    pub fn path(&self, rel: &str) -> CliResult<PathBuf> {
        let p = Path::new(rel);
        if rel.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(CliError::Schema(format!("refusing to write outside the output directory: {rel:?}")));
        }
        let full = self.root.join(p);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        Ok(full)
    }

    /// Path for an artifact that will be listed with its hash.
    pub fn artifact(&self, rel: &str) -> CliResult<PathBuf> {
        self.register(rel, Kind::Deterministic)
    }

    pub fn register(&self, rel: &str, kind: Kind) -> CliResult<PathBuf> {
        let full = self.path(rel)?;
        self.files.lock().expect("artifact list poisoned").push((rel.to_string(), kind));
        Ok(full)
    }

    pub fn write(&self, rel: &str, bytes: impl AsRef<[u8]>) -> CliResult<()> {
        let full = self.artifact(rel)?;
        fs::write(&full, bytes).map_err(|e| CliError::io(full, e))
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> CliResult<()> {
        self.write(rel, to_json(value))
    }

    /// Hashes of every registered artifact of `kind`, sorted by path.
    pub fn hashes(&self, kind: Kind) -> CliResult<Vec<Artifact>> {
        let mut files: Vec<String> =
            self.files.lock().expect("artifact list poisoned").iter().filter(|f| f.1 == kind).map(|f| f.0.clone()).collect();
        files.sort();
        files.dedup();
        files.iter().map(|rel| hash_file(&self.root.join(rel)).map(|(sha256, bytes)| Artifact { path: rel.clone(), sha256, bytes })).collect()
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn hash_file(path: &Path) -> CliResult<(String, u64)> {
    let mut f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        total += n as u64;
        h.update(&buf[..n]);
    }
    Ok((hex::encode(h.finalize()), total))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Deterministic record of a job: identical config and seed give an
/// identical file, whatever the thread count or output location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub task: String,
    pub seed: u64,
    pub replicates: usize,
    /// Job parameters with every default filled in.
    pub config: serde_json::Value,
    pub artifacts: Vec<Artifact>,
}

/// Wall-clock facts about a run, kept apart from the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub threads: usize,
    pub runtime_s: f64,
    pub replicate_runtime_s: Vec<f64>,
    pub timed_artifacts: Vec<Artifact>,
}
