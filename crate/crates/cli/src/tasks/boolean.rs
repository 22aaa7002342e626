use microforge_core::boolean::{sample_boolean, sample_cox_boolean_spheres, voxelize_grains, GrainList, GrainShapeSpec, GrainSpec};
use microforge_core::dist::SizeDist;
use microforge_core::io::SliceExport;
use microforge_core::points::{MaternParams, Window};
use microforge_core::{Dims, LabelMask, RandomStream};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{save_mask, save_slices};
use crate::config::{check_dims, voxel_count, Task};
use crate::error::{schema, stage, CliError, CliResult};
use crate::job::{Job, Replicate};

/// Germ process of the grains. Intensities are per cubic voxel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Process {
    Poisson { intensity: f64 },
    /// Poisson intensity chosen so the expected covered fraction is
    /// `fraction`.
    TargetFraction { fraction: f64 },
    /// Spheres at Matérn cluster germs (a Cox process); the grain shape
    /// must be a sphere.
    Cox { parent_intensity: f64, mean_points_per_cluster: f64, cluster_radius: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BooleanJob {
    pub dims: [usize; 3],
    pub spacing_um: [f64; 3],
    /// Grain sizes in voxels.
    pub grain: GrainSpec,
    pub process: Process,
    pub grains_csv: bool,
    pub slices: bool,
}

impl Default for BooleanJob {
    fn default() -> Self {
        BooleanJob {
            dims: [128; 3],
            spacing_um: [1.0; 3],
            grain: GrainSpec::spheres(SizeDist::constant(6.0)),
            process: Process::TargetFraction { fraction: 0.3 },
            grains_csv: true,
            slices: false,
        }
    }
}

impl BooleanJob {
    pub(crate) fn check(&self) -> CliResult<()> {
        check_dims(self.dims, self.spacing_um)?;
        self.grain.validate().map_err(schema)?;
        match &self.process {
            Process::Poisson { intensity } if !(*intensity >= 0.0 && intensity.is_finite()) => {
                Err(CliError::Schema(format!("intensity must be >= 0, got {intensity}")))
            }
            Process::TargetFraction { fraction } if !(*fraction >= 0.0 && *fraction < 1.0) => {
                Err(CliError::Schema(format!("fraction must lie in [0, 1), got {fraction}")))
            }
            Process::Cox { parent_intensity, mean_points_per_cluster, cluster_radius } => {
                if !matches!(self.grain.shape, GrainShapeSpec::Sphere { .. }) {
                    return Err(CliError::Schema("the cox process takes sphere grains".into()));
                }
                MaternParams { parent_intensity: *parent_intensity, mean_points_per_cluster: *mean_points_per_cluster, cluster_radius: *cluster_radius }
                    .validate()
                    .map_err(schema)
            }
            _ => Ok(()),
        }
    }

    pub(crate) fn dims(&self) -> Dims {
        Dims::new(self.dims[0], self.dims[1], self.dims[2])
    }

    /// Poisson intensity per cubic voxel, if the process is Poisson.
    fn intensity(&self) -> Option<f64> {
        match self.process {
            Process::Poisson { intensity } => Some(intensity),
            Process::TargetFraction { fraction } => Some(-(1.0 - fraction).ln() / self.grain.mean_volume()),
            Process::Cox { .. } => None,
        }
    }
}

/// Grains and their voxelization on the job grid (voxel units).
pub fn generate_solid(job: &BooleanJob, stream: RandomStream) -> CliResult<(GrainList, LabelMask)> {
    let window = Window::from_extent(job.dims.map(|n| n as f64));
    let s = stream.substream("grains", 0);
    let grains = match (job.intensity(), &job.process) {
        (Some(lambda), _) => sample_boolean(&job.grain, lambda, window, s),
        (None, Process::Cox { parent_intensity, mean_points_per_cluster, cluster_radius }) => {
            let GrainShapeSpec::Sphere { radius } = job.grain.shape else { unreachable!("checked in validate") };
            let m = MaternParams { parent_intensity: *parent_intensity, mean_points_per_cluster: *mean_points_per_cluster, cluster_radius: *cluster_radius };
            sample_cox_boolean_spheres(m, radius, window, s)
        }
        (None, _) => unreachable!("only the cox process has no intensity"),
    }
    .map_err(stage("grains"))?;
    let solid = voxelize_grains(&grains, job.dims(), [1.0; 3]).map_err(stage("voxelize"))?;
    Ok((grains, solid))
}

impl Job for BooleanJob {
    const TASK: Task = Task::Boolean;

    fn validate(&self, _replicates: usize) -> CliResult<()> {
        self.check()
    }

    fn voxels(&self) -> CliResult<u128> {
        Ok(voxel_count(self.dims))
    }

    fn run_replicate(&self, rep: &Replicate) -> CliResult<Value> {
        let (grains, solid) = generate_solid(self, rep.stream)?;
        save_mask(rep.out, &rep.rel("solid.raw"), &solid, self.spacing_um)?;
        if self.grains_csv {
            rep.out.write(&rep.rel("grains.csv"), grains.to_csv())?;
        }
        if self.slices {
            save_slices(rep.out, &rep.rel("solid_slices"), None, Some(&solid), SliceExport::default())?;
        }
        let stats = json!({
            "grains": grains.len(),
            "intensity": self.intensity(),
            "expected_fraction": self.intensity().map(|l| self.grain.coverage(l)),
            "volume_fraction": solid.fraction(),
        });
        rep.write_provenance(Task::Boolean, self, stats.clone())?;
        Ok(stats)
    }
}
