use std::path::PathBuf;

use microforge_core::eval::dice;
use microforge_core::io::{read_sidecar, read_volume, sidecar_path};
use microforge_core::segment::{segment_cracks, CracknessParams, Method, PercolationParams};
use microforge_core::{LabelMask, VoxelVolume};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::save_mask;
use crate::config::{voxel_count, Task};
use crate::error::{schema, stage, CliError, CliResult};
use crate::job::{Job, Replicate};
use crate::output::hash_file;

/// Plate-measure constants; the smoothing scale is
/// `percolation.smoothing_sigma_vox`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlateParams {
    pub alpha: f64,
    pub beta: f64,
    pub contrast: f64,
}

impl Default for PlateParams {
    fn default() -> Self {
        let c = CracknessParams::default();
        PlateParams { alpha: c.alpha, beta: c.beta, contrast: c.contrast }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmenterMethod {
    Hessian,
    RieszFeatures,
    /// Returns the ground truth unchanged (pipeline check).
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Segmenter {
    pub method: SegmenterMethod,
    pub plate: PlateParams,
    pub percolation: PercolationParams,
    pub n_scales: usize,
}

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter { method: SegmenterMethod::Hessian, plate: PlateParams::default(), percolation: PercolationParams::default(), n_scales: 1 }
    }
}

impl Segmenter {
    fn crackness(&self) -> CracknessParams {
        CracknessParams {
            sigma: self.percolation.smoothing_sigma_vox,
            alpha: self.plate.alpha,
            beta: self.plate.beta,
            contrast: self.plate.contrast,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.percolation.validate().map_err(schema)?;
        self.crackness().validate().map_err(schema)?;
        if self.n_scales == 0 {
            return Err(CliError::Schema("n_scales must be at least 1".into()));
        }
        Ok(())
    }

    /// Segments `volume`; the oracle needs `truth`.
    pub fn apply(&self, volume: &VoxelVolume, truth: Option<&LabelMask>) -> CliResult<LabelMask> {
        let method = match self.method {
            SegmenterMethod::Oracle => {
                return truth.cloned().ok_or_else(|| CliError::Schema("the oracle segmenter needs ground truth".into()));
            }
            SegmenterMethod::Hessian => Method::Hessian,
            SegmenterMethod::RieszFeatures => Method::RieszFeatures,
        };
        segment_cracks(volume, method, self.crackness(), &self.percolation, self.n_scales).map_err(stage("segment"))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentJob {
    /// Raw volume with a `<path>.json` sidecar.
    pub input: PathBuf,
    /// Optional ground-truth mask (raw + sidecar) to score against.
    pub truth: Option<PathBuf>,
    pub segmenter: Segmenter,
}

fn load(path: &PathBuf, what: &'static str) -> CliResult<VoxelVolume> {
    read_volume(path, &sidecar_path(path)).map_err(stage(what))
}

impl Job for SegmentJob {
    const TASK: Task = Task::Segment;

    fn validate(&self, replicates: usize) -> CliResult<()> {
        if self.input.as_os_str().is_empty() {
            return Err(CliError::Schema("params.input is required".into()));
        }
        if replicates != 1 {
            return Err(CliError::Schema("segment jobs are deterministic; use replicates = 1".into()));
        }
        if self.segmenter.method == SegmenterMethod::Oracle && self.truth.is_none() {
            return Err(CliError::Schema("the oracle segmenter needs params.truth".into()));
        }
        self.segmenter.validate()
    }

    fn voxels(&self) -> CliResult<u128> {
        Ok(voxel_count(read_sidecar(&sidecar_path(&self.input)).map_err(stage("input"))?.dims))
    }

    fn run_replicate(&self, rep: &Replicate) -> CliResult<Value> {
        let volume = load(&self.input, "input")?;
        let truth = match &self.truth {
            Some(p) => Some(LabelMask::from_volume(&load(p, "truth")?)),
            None => None,
        };
        let mask = self.segmenter.apply(&volume, truth.as_ref())?;
        save_mask(rep.out, &rep.rel("mask.raw"), &mask, volume.spacing_um())?;
        let scores = match &truth {
            Some(t) => Some(dice(&mask, t).map_err(stage("score"))?),
            None => None,
        };
        let stats = json!({
            "input_sha256": hash_file(&self.input)?.0,
            "mask_voxels": mask.count(),
            "scores": scores,
        });
        rep.write_provenance(Task::Segment, self, stats.clone())?;
        Ok(stats)
    }
}
