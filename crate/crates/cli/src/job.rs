use std::path::{Path, PathBuf};
use std::time::Instant;

use microforge_core::RandomStream;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{parse_params, JobFile, Task};
use crate::error::{CliError, CliResult};
use crate::output::{hash_file, to_json, Kind, Manifest, OutDir, RunLog, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION, RUN_LOG_FILE};
use crate::tasks::{BooleanJob, CrackJob, EvalJob, MillingJob, SegmentJob, SemJob};

pub const TOOL: &str = "microforge";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Jobs above this many voxels need `--force-large`.
pub const VOXEL_BUDGET: u128 = 1_000_000_000;

#[derive(Clone, Debug, Default)]
pub struct JobOptions {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub force_large: bool,
    pub match_histogram: Option<PathBuf>,
}

/// Inputs shared by every replicate that do not come from the job file.
#[derive(Default)]
pub struct Extras {
    pub histogram_reference: Option<Vec<f32>>,
}

pub struct Replicate<'a> {
    pub out: &'a OutDir,
    pub seed: u64,
    pub index: usize,
    pub stream: RandomStream,
    pub extras: &'a Extras,
}

impl Replicate<'_> {
    /// Path of `name` inside this replicate's directory.
    pub fn rel(&self, name: &str) -> String {
        format!("replicate_{:03}/{name}", self.index)
    }

    pub fn write_provenance<P: Serialize>(&self, task: Task, params: &P, stats: Value) -> CliResult<()> {
        let doc = json!({
            "tool": TOOL,
            "version": VERSION,
            "task": task.name(),
            "seed": self.seed,
            "stream_id": self.index,
            "params": params,
            "stats": stats,
        });
        self.out.write_json(&self.rel("provenance.json"), &doc)
    }
}

pub trait Job: Serialize + DeserializeOwned + Default + Sync {
    const TASK: Task;

    fn validate(&self, replicates: usize) -> CliResult<()>;

    /// Voxels (or height-map cells) produced by one replicate.
    fn voxels(&self) -> CliResult<u128>;

    /// Generates one replicate and returns its deterministic summary.
    fn run_replicate(&self, rep: &Replicate) -> CliResult<Value>;

    /// Job-level outputs written after all replicates finished.
    fn finish(&self, _out: &OutDir, _seed: u64, _summaries: &[Value], _runtimes: &[f64]) -> CliResult<()> {
        Ok(())
    }
}

pub fn run_job(task: Task, opts: &JobOptions) -> CliResult<Manifest> {
    let file = JobFile::load(&opts.config)?;
    run_job_file(task, &file, opts)
}

pub fn run_job_file(task: Task, file: &JobFile, opts: &JobOptions) -> CliResult<Manifest> {
    if let Some(t) = file.task {
        if t != task {
            return Err(CliError::Schema(format!("job file is for task `{}`, not `{}`", t.name(), task.name())));
        }
    }
    let seed = opts.seed.or(file.seed).ok_or_else(|| CliError::Schema("no seed given (use --seed or `seed` in the job file)".into()))?;
    if opts.match_histogram.is_some() && task != Task::Sem {
        return Err(CliError::Schema("--match-histogram only applies to the sem task".into()));
    }
    match task {
        Task::Crack => run::<CrackJob>(file, seed, opts),
        Task::Sem => run::<SemJob>(file, seed, opts),
        Task::Boolean => run::<BooleanJob>(file, seed, opts),
        Task::Milling => run::<MillingJob>(file, seed, opts),
        Task::Segment => run::<SegmentJob>(file, seed, opts),
        Task::Eval => run::<EvalJob>(file, seed, opts),
    }
}

/// Complete job file with every default filled in.
pub fn default_job_file(task: Task) -> Value {
    fn with<J: Job>() -> Value {
        json!({ "task": J::TASK, "seed": 0, "replicates": 1, "params": J::default() })
    }
    match task {
        Task::Crack => with::<CrackJob>(),
        Task::Sem => with::<SemJob>(),
        Task::Boolean => with::<BooleanJob>(),
        Task::Milling => with::<MillingJob>(),
        Task::Segment => with::<SegmentJob>(),
        Task::Eval => with::<EvalJob>(),
    }
}

fn load_reference(path: &Path) -> CliResult<(Vec<f32>, String)> {
    let (values, _, _) = microforge_core::io::read_gray_png(path).map_err(crate::error::stage("histogram reference"))?;
    let (sha, _) = hash_file(path)?;
    Ok((values, sha))
}

fn run<J: Job>(file: &JobFile, seed: u64, opts: &JobOptions) -> CliResult<Manifest> {
    let job: J = parse_params(&file.params)?;
    job.validate(file.replicates)?;
    let total = job.voxels()? * file.replicates as u128;
    if total > VOXEL_BUDGET && !opts.force_large {
        return Err(CliError::Schema(format!("job would produce {total} voxels (budget {VOXEL_BUDGET}); pass --force-large to run it")));
    }
    let mut config = json!({ "replicates": file.replicates, "params": &job });
    let mut extras = Extras::default();
    if let Some(path) = &opts.match_histogram {
        let (values, sha) = load_reference(path)?;
        if values.is_empty() {
            return Err(CliError::Schema("histogram reference image is empty".into()));
        }
        extras.histogram_reference = Some(values);
        config["match_histogram_sha256"] = json!(sha);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Schema(format!("thread pool: {e}")))?;
    let out = OutDir::create(&opts.out)?;
    let start = Instant::now();
    let results: Vec<CliResult<(Value, f64)>> = pool.install(|| {
        (0..file.replicates)
            .into_par_iter()
            .map(|index| {
                let t = Instant::now();
                let rep = Replicate { out: &out, seed, index, stream: RandomStream::new(seed, index as u64), extras: &extras };
                job.run_replicate(&rep).map(|v| (v, t.elapsed().as_secs_f64()))
            })
            .collect()
    });
    let mut summaries = Vec::with_capacity(results.len());
    let mut runtimes = Vec::with_capacity(results.len());
    for r in results {
        let (v, t) = r?;
        summaries.push(v);
        runtimes.push(t);
    }
    pool.install(|| job.finish(&out, seed, &summaries, &runtimes))?;

    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        tool: TOOL.into(),
        version: VERSION.into(),
        task: J::TASK.name().into(),
        seed,
        replicates: file.replicates,
        config,
        artifacts: out.hashes(Kind::Deterministic)?,
    };
    let path = out.path(MANIFEST_FILE)?;
    std::fs::write(&path, to_json(&manifest)).map_err(|e| CliError::io(path, e))?;
    let log = RunLog {
        threads: pool.current_num_threads(),
        runtime_s: start.elapsed().as_secs_f64(),
        replicate_runtime_s: runtimes,
        timed_artifacts: out.hashes(Kind::Timed)?,
    };
    let path = out.path(RUN_LOG_FILE)?;
    std::fs::write(&path, to_json(&log)).map_err(|e| CliError::io(path, e))?;
    Ok(manifest)
}
