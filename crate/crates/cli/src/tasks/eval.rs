//! Generate, segment and score: one row per replicate.

use microforge_core::eval::dice;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{generate_crack, save_mask, save_volume, CrackJob, Segmenter};
use crate::config::Task;
use crate::error::{stage, CliError, CliResult};
use crate::job::{Job, Replicate};
use crate::output::{Kind, OutDir};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalJob {
    pub generate: CrackJob,
    pub segment: Segmenter,
    /// Also write volume, truth and prediction per replicate.
    pub write_volumes: bool,
}

pub const SCORES_CSV: &str = "scores.csv";
pub const SUMMARY_JSON: &str = "summary.json";

impl Job for EvalJob {
    const TASK: Task = Task::Eval;

    fn validate(&self, replicates: usize) -> CliResult<()> {
        self.generate.validate(replicates)?;
        self.segment.validate()
    }

    fn voxels(&self) -> CliResult<u128> {
        self.generate.voxels()
    }

    fn run_replicate(&self, rep: &Replicate) -> CliResult<Value> {
        let sample = generate_crack(&self.generate, rep.stream)?;
        let prediction = self.segment.apply(&sample.volume, Some(&sample.mask))?;
        let s = dice(&prediction, &sample.mask).map_err(stage("score"))?;
        if self.write_volumes {
            let spacing = sample.volume.spacing_um();
            save_volume(rep.out, &rep.rel("volume.raw"), &sample.volume.clone().with_dtype(self.generate.export.volume_dtype))?;
            save_mask(rep.out, &rep.rel("truth.raw"), &sample.mask, spacing)?;
            save_mask(rep.out, &rep.rel("prediction.raw"), &prediction, spacing)?;
        }
        Ok(json!({
            "replicate": rep.index,
            "stream_id": rep.index,
            "dice": s.dice,
            "precision": s.precision,
            "recall": s.recall,
            "tp": s.tp,
            "fp": s.fp,
            "fn": s.fn_,
            "tn": s.tn,
        }))
    }

    fn finish(&self, out: &OutDir, seed: u64, summaries: &[Value], runtimes: &[f64]) -> CliResult<()> {
        let dices: Vec<f64> = summaries.iter().map(|v| v["dice"].as_f64().unwrap_or(f64::NAN)).collect();
        let mean = dices.iter().sum::<f64>() / dices.len() as f64;
        let min = dices.iter().cloned().fold(f64::INFINITY, f64::min);
        out.write_json(
            SUMMARY_JSON,
            &json!({ "seed": seed, "segmenter": self.segment, "mean_dice": mean, "min_dice": min, "replicates": summaries }),
        )?;

        let params = serde_json::to_string(&self.segment).expect("segmenter serializes");
        let path = out.register(SCORES_CSV, Kind::Timed)?;
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        w.write_record(["seed", "replicate", "method", "params", "dice", "precision", "recall", "runtime_s"]).map_err(|e| csv_error(&path, e))?;
        for (row, t) in summaries.iter().zip(runtimes) {
            let method = serde_json::to_value(self.segment.method).expect("method serializes");
            w.write_record([
                seed.to_string(),
                row["replicate"].to_string(),
                method.as_str().unwrap_or_default().to_string(),
                params.clone(),
                row["dice"].to_string(),
                row["precision"].to_string(),
                row["recall"].to_string(),
                format!("{t:.3}"),
            ])
            .map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))
    }
}

fn csv_error(path: &std::path::Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}
