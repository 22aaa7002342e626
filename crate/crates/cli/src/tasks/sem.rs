use std::path::PathBuf;

use microforge_core::boolean::{GrainShapeSpec, GrainSpec, Orientation};
use microforge_core::dist::SizeDist;
use microforge_core::io::{read_volume, sidecar_path, SliceExport};
use microforge_core::sem::{match_histogram, simulate_sem_stack, SemConfig};
use microforge_core::LabelMask;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{generate_solid, save_slices, BooleanJob, Process};
use crate::config::{voxel_count, Task};
use crate::error::{schema, stage, CliError, CliResult};
use crate::job::{Job, Replicate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolidSource {
    Boolean(BooleanJob),
    /// Raw volume with a `<path>.json` sidecar; nonzero voxels are solid.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemJob {
    pub solid: SolidSource,
    pub sem: SemConfig,
}

impl Default for SemJob {
    fn default() -> Self {
        let grain = GrainSpec {
            shape: GrainShapeSpec::Cylinder { radius: SizeDist::constant(4.0), height: SizeDist::constant(32.0) },
            orientation: Orientation::Isotropic,
        };
        let solid = BooleanJob {
            dims: [128, 128, 64],
            grain,
            process: Process::TargetFraction { fraction: 0.2 },
            grains_csv: false,
            ..BooleanJob::default()
        };
        SemJob { solid: SolidSource::Boolean(solid), sem: SemConfig::default() }
    }
}

impl Job for SemJob {
    const TASK: Task = Task::Sem;

    fn validate(&self, _replicates: usize) -> CliResult<()> {
        self.sem.validate().map_err(schema)?;
        match &self.solid {
            SolidSource::Boolean(b) => b.check(),
            SolidSource::File { path } if path.as_os_str().is_empty() => Err(CliError::Schema("solid.path is empty".into())),
            SolidSource::File { .. } => Ok(()),
        }
    }

    fn voxels(&self) -> CliResult<u128> {
        match &self.solid {
            SolidSource::Boolean(b) => Ok(voxel_count(b.dims)),
            SolidSource::File { path } => {
                let meta = microforge_core::io::read_sidecar(&sidecar_path(path)).map_err(stage("solid"))?;
                Ok(voxel_count(meta.dims))
            }
        }
    }

    fn run_replicate(&self, rep: &Replicate) -> CliResult<Value> {
        let solid = match &self.solid {
            SolidSource::Boolean(b) => generate_solid(b, rep.stream)?.1,
            SolidSource::File { path } => LabelMask::from_volume(&read_volume(path, &sidecar_path(path)).map_err(stage("solid"))?),
        };
        let mut stack = simulate_sem_stack(&solid, &self.sem, rep.stream.substream("sem", 0)).map_err(stage("sem"))?;
        if let Some(reference) = &rep.extras.histogram_reference {
            let n = stack.images.dims().slice_len();
            for plane in stack.images.data_mut().chunks_mut(n) {
                match_histogram(plane, reference).map_err(stage("histogram matching"))?;
            }
        }
        let window = SliceExport { window: Some((0.0, 1.0)), ..SliceExport::default() };
        save_slices(rep.out, &rep.rel("images"), Some(&stack.images), None, window)?;
        save_slices(rep.out, &rep.rel("masks"), None, Some(&stack.truth), SliceExport::default())?;
        let stats = json!({
            "planes": stack.planes,
            "solid_fraction": solid.fraction(),
            "histogram_matched": rep.extras.histogram_reference.is_some(),
        });
        rep.write_provenance(Task::Sem, self, stats.clone())?;
        Ok(stats)
    }
}
