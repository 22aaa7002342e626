//! Voronoi min-cut and fractional Brownian cracks blended into a
//! background volume.

use std::path::PathBuf;

use microforge_core::blend::{blend_into_volume, estimate_air_gray_model, noise_phantom, GrayModel, DEFAULT_PV_SIGMA};
use microforge_core::crack::{
    assign_widths_random_walk, brownian_crack, make_multiscale_widths, min_cut_crack, union_of_cuts, voxelize_crack, widen, CrackSurface,
    WidthWalkParams,
};
use microforge_core::dist::SizeDist;
use microforge_core::eval::{separation_check, thickness_stats};
use microforge_core::io::{read_volume, sidecar_path, SliceExport};
use microforge_core::points::{
    sample_force_biased_packing, sample_matern_cluster, sample_poisson, stretch_points, MaternParams, PackingParams, PointPattern, Window,
    MAX_PACKING_FRACTION,
};
use microforge_core::tessellation::{build_voronoi, Tessellation};
use microforge_core::{Axis, Dims, Dtype, LabelMask, RandomStream, VoxelVolume};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{save_mask, save_slices, save_volume};
use crate::config::{check_dims, voxel_count, Task};
use crate::error::{schema, stage, CliError, CliResult};
use crate::job::{Job, Replicate};

/// Germs of the tessellation. Counts are expected numbers of germs in the
/// window (voxel units).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum GermModel {
    Poisson { cells: f64 },
    Matern { parents: f64, mean_per_cluster: f64, cluster_radius_vox: f64 },
    /// Force-biased packing of equal spheres at the given volume fraction.
    Packing { cells: usize, fraction: f64 },
    /// Poisson germs in a shrunken window, stretched back by `stretch`.
    Stretched { cells: f64, stretch: [f64; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceModel {
    /// Minimum-area facet cut between the two window faces normal to
    /// `axis`; `extra_axes` adds the cuts for further axes (union).
    MinCut {
        axis: Axis,
        #[serde(default)]
        extra_axes: Vec<Axis>,
    },
    /// Height field `z = nz/2 + f(x, y)`; separates along z.
    Fbm { hurst: f64, amplitude_vox: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WidthModel {
    Constant { width: u32 },
    RandomWalk(WidthWalkParams),
    /// Contiguous facet patches with widths from `scales`.
    Multiscale { scales: Vec<u32>, regions: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Background {
    /// Constant gray level plus Gaussian noise.
    Synthetic { level: f64, noise_stddev: f64 },
    /// Raw volume with a `<path>.json` sidecar; dims must match the job.
    File { path: PathBuf, air_threshold: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrackExport {
    pub germs_csv: bool,
    pub thickness_csv: bool,
    pub tessellation_off: bool,
    /// PNG z-slices of the volume and the mask.
    pub slices: bool,
    pub volume_dtype: Dtype,
}

impl Default for CrackExport {
    fn default() -> Self {
        CrackExport { germs_csv: true, thickness_csv: true, tessellation_off: false, slices: false, volume_dtype: Dtype::U16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrackJob {
    pub dims: [usize; 3],
    pub spacing_um: [f64; 3],
    pub germs: GermModel,
    pub surface: SurfaceModel,
    pub width: WidthModel,
    pub background: Background,
    /// Gray values filled into the crack. Defaults to N(0.1, 0.03) for a
    /// synthetic background and to the air-voxel histogram of a file.
    pub gray_model: Option<GrayModel>,
    pub pv_sigma_vox: f64,
    pub export: CrackExport,
}

impl Default for CrackJob {
    fn default() -> Self {
        CrackJob {
            dims: [128; 3],
            spacing_um: [1.0; 3],
            germs: GermModel::Poisson { cells: 200.0 },
            surface: SurfaceModel::MinCut { axis: Axis::Z, extra_axes: Vec::new() },
            width: WidthModel::Constant { width: 3 },
            background: Background::Synthetic { level: 0.6, noise_stddev: 0.03 },
            gray_model: None,
            pv_sigma_vox: DEFAULT_PV_SIGMA,
            export: CrackExport::default(),
        }
    }
}

const AIR_BINS: usize = 64;

pub struct CrackSample {
    pub volume: VoxelVolume,
    pub mask: LabelMask,
    /// Axis the crack separates along.
    pub axis: Axis,
    pub germs: Option<PointPattern>,
    pub tessellation: Option<Tessellation>,
    pub crack: Option<CrackSurface>,
    pub gray_model: GrayModel,
}

impl CrackJob {
    fn dims(&self) -> Dims {
        Dims::new(self.dims[0], self.dims[1], self.dims[2])
    }

    fn window(&self) -> Window {
        Window::from_extent(self.dims.map(|n| n as f64))
    }

    fn check(&self) -> CliResult<()> {
        check_dims(self.dims, self.spacing_um)?;
        let min_dim = *self.dims.iter().min().unwrap();
        if min_dim < 8 {
            return Err(CliError::Schema(format!("crack volumes need at least 8 voxels per axis, got {:?}", self.dims)));
        }
        let bad = |m: String| Err(CliError::Schema(m));
        match &self.germs {
            GermModel::Poisson { cells } | GermModel::Stretched { cells, .. } if !(*cells > 0.0 && cells.is_finite()) => {
                return bad(format!("germs.cells must be positive, got {cells}"));
            }
            GermModel::Stretched { stretch, .. } if !stretch.iter().all(|s| *s >= 1.0 && s.is_finite()) => {
                return bad(format!("germs.stretch factors must be >= 1, got {stretch:?}"));
            }
            GermModel::Matern { parents, mean_per_cluster, cluster_radius_vox } => {
                self.matern(*parents, *mean_per_cluster, *cluster_radius_vox).validate().map_err(schema)?;
            }
            GermModel::Packing { cells, fraction } => {
                if *cells < 2 || !(*fraction > 0.0 && *fraction <= MAX_PACKING_FRACTION) {
                    return bad(format!("packing needs cells >= 2 and fraction in (0, {MAX_PACKING_FRACTION}], got {cells}, {fraction}"));
                }
            }
            _ => {}
        }
        let max_width = |w: u32| -> CliResult<()> {
            if w < 1 || w as usize > min_dim / 2 {
                return Err(CliError::Schema(format!("widths must lie in [1, {}], got {w}", min_dim / 2)));
            }
            Ok(())
        };
        match &self.width {
            WidthModel::Constant { width } => max_width(*width)?,
            WidthModel::RandomWalk(p) => {
                p.validate().map_err(schema)?;
                max_width(p.w_max.unwrap_or(u32::MAX))?;
            }
            WidthModel::Multiscale { scales, regions } => {
                if scales.is_empty() || *regions == 0 {
                    return bad("multiscale widths need scales and regions >= 1".into());
                }
                for &w in scales {
                    max_width(w)?;
                }
            }
        }
        if let SurfaceModel::Fbm { hurst, amplitude_vox } = &self.surface {
            if !(*hurst > 0.0 && *hurst < 1.0) || !(*amplitude_vox >= 0.0 && amplitude_vox.is_finite()) {
                return bad(format!("fbm needs hurst in (0, 1) and amplitude >= 0, got {hurst}, {amplitude_vox}"));
            }
            if !matches!(self.width, WidthModel::Constant { .. }) {
                return bad("fbm cracks take a constant width".into());
            }
        }
        match &self.background {
            Background::Synthetic { level, noise_stddev } => {
                if !(0.0..=1.0).contains(level) || !(*noise_stddev >= 0.0) {
                    return bad(format!("background level must lie in [0, 1] and noise >= 0, got {level}, {noise_stddev}"));
                }
            }
            Background::File { path, .. } if path.as_os_str().is_empty() => return bad("background.path is empty".into()),
            _ => {}
        }
        if let Some(m) = &self.gray_model {
            m.validate().map_err(schema)?;
        }
        if !(self.pv_sigma_vox >= 0.0 && self.pv_sigma_vox.is_finite()) {
            return bad(format!("pv_sigma_vox must be >= 0, got {}", self.pv_sigma_vox));
        }
        Ok(())
    }

    fn matern(&self, parents: f64, mean_per_cluster: f64, radius: f64) -> MaternParams {
        MaternParams { parent_intensity: parents / self.window().volume(), mean_points_per_cluster: mean_per_cluster, cluster_radius: radius }
    }

    fn sample_germs(&self, stream: RandomStream) -> CliResult<PointPattern> {
        let w = self.window();
        let s = stream.substream("germs", 0);
        match &self.germs {
            GermModel::Poisson { cells } => sample_poisson(cells / w.volume(), w, s),
            GermModel::Matern { parents, mean_per_cluster, cluster_radius_vox } => {
                sample_matern_cluster(self.matern(*parents, *mean_per_cluster, *cluster_radius_vox), w, s)
            }
            GermModel::Packing { cells, fraction } => {
                let r = (fraction * w.volume() / *cells as f64 / (4.0 / 3.0 * std::f64::consts::PI)).cbrt();
                sample_force_biased_packing(*cells, SizeDist::constant(r), w, s, PackingParams::default())
            }
            GermModel::Stretched { cells, stretch } => {
                let ext = w.extent();
                let small = Window::from_extent([0, 1, 2].map(|k| ext[k] / stretch[k]));
                sample_poisson(cells / small.volume(), small, s).and_then(|p| stretch_points(&p, *stretch))
            }
        }
        .map_err(stage("germs"))
    }

    fn load_background(&self, stream: RandomStream) -> CliResult<(VoxelVolume, GrayModel)> {
        match &self.background {
            Background::Synthetic { level, noise_stddev } => {
                let bg = noise_phantom(self.dims(), *level, *noise_stddev, stream.substream("background", 0)).map_err(stage("background"))?;
                let model = self.gray_model.clone().unwrap_or(GrayModel::Gaussian { mean: 0.1, stddev: 0.03 });
                Ok((bg, model))
            }
            Background::File { path, air_threshold } => {
                let bg = read_volume(path, &sidecar_path(path)).map_err(stage("background"))?;
                let d = bg.dims();
                if [d.nx, d.ny, d.nz] != self.dims {
                    return Err(CliError::Schema(format!("background {} has dims {:?}, job wants {:?}", path.display(), [d.nx, d.ny, d.nz], self.dims)));
                }
                let model = match &self.gray_model {
                    Some(m) => m.clone(),
                    None => estimate_air_gray_model(&bg, *air_threshold, AIR_BINS).map_err(stage("gray model"))?,
                };
                Ok((bg.with_dtype(Dtype::F32), model))
            }
        }
    }
}

/// Germs, tessellation, cut, widths, voxelization and blending for one
/// replicate stream.
pub fn generate_crack(job: &CrackJob, stream: RandomStream) -> CliResult<CrackSample> {
    let dims = job.dims();
    let (mask, axis, germs, tess, crack) = match &job.surface {
        SurfaceModel::Fbm { hurst, amplitude_vox } => {
            let WidthModel::Constant { width } = job.width else { unreachable!("checked in validate") };
            let thin = brownian_crack(*hurst, *amplitude_vox, dims, stream.substream("surface", 0)).map_err(stage("crack"))?;
            let mask = if width > 1 { widen(&thin, width).map_err(stage("crack"))? } else { thin };
            (mask, Axis::Z, None, None, None)
        }
        SurfaceModel::MinCut { axis, extra_axes } => {
            let germs = job.sample_germs(stream)?;
            let tess = build_voronoi(&germs, job.window()).map_err(stage("tessellation"))?;
            let cut = if extra_axes.is_empty() {
                min_cut_crack(&tess, *axis)
            } else {
                let mut axes = vec![*axis];
                axes.extend(extra_axes.iter().copied().filter(|a| a != axis));
                union_of_cuts(&tess, &axes)
            }
            .map_err(stage("crack"))?;
            let widths = stream.substream("widths", 0);
            let crack = match &job.width {
                WidthModel::Constant { width } => cut.with_constant_width(*width),
                WidthModel::RandomWalk(p) => assign_widths_random_walk(&tess, &cut, p, widths).map_err(stage("widths"))?,
                WidthModel::Multiscale { scales, regions } => {
                    make_multiscale_widths(&tess, &cut, scales, *regions, widths).map_err(stage("widths"))?
                }
            };
            let mask = voxelize_crack(&crack, &tess, dims).map_err(stage("voxelize"))?;
            (mask, *axis, Some(germs), Some(tess), Some(crack))
        }
    };
    let (bg, gray_model) = job.load_background(stream)?;
    let volume = blend_into_volume(&bg, &mask, &gray_model, job.pv_sigma_vox, stream.substream("blend", 0))
        .map_err(stage("blend"))?
        .with_spacing(job.spacing_um);
    Ok(CrackSample { volume, mask, axis, germs, tessellation: tess, crack, gray_model })
}

impl Job for CrackJob {
    const TASK: Task = Task::Crack;

    fn validate(&self, _replicates: usize) -> CliResult<()> {
        self.check()
    }

    fn voxels(&self) -> CliResult<u128> {
        Ok(voxel_count(self.dims))
    }

    fn run_replicate(&self, rep: &Replicate) -> CliResult<Value> {
        let s = generate_crack(self, rep.stream)?;
        let out = rep.out;
        save_volume(out, &rep.rel("volume.raw"), &s.volume.clone().with_dtype(self.export.volume_dtype))?;
        save_mask(out, &rep.rel("mask.raw"), &s.mask, self.spacing_um)?;
        let sep = separation_check(&s.mask, s.axis);
        let thickness = if s.mask.is_empty() { None } else { Some(thickness_stats(&s.mask).map_err(stage("thickness"))?) };
        if let (true, Some(t)) = (self.export.thickness_csv, &thickness) {
            out.write(&rep.rel("thickness.csv"), t.to_csv())?;
        }
        if let (true, Some(g)) = (self.export.germs_csv, &s.germs) {
            out.write(&rep.rel("germs.csv"), g.to_csv())?;
        }
        if let (true, Some(t)) = (self.export.tessellation_off, &s.tessellation) {
            out.write(&rep.rel("tessellation.off"), t.to_off())?;
        }
        if self.export.slices {
            let window = SliceExport { window: Some((0.0, 1.0)), ..SliceExport::default() };
            save_slices(out, &rep.rel("volume_slices"), Some(&s.volume), None, window)?;
            save_slices(out, &rep.rel("mask_slices"), None, Some(&s.mask), SliceExport::default())?;
        }
        let widths = s.crack.as_ref().map(|c| {
            let n = c.widths.len().max(1) as f64;
            json!({
                "facets": c.len(),
                "cut_weight": c.cut_weight,
                "width_min": c.widths.iter().min(),
                "width_max": c.widths.iter().max(),
                "width_mean": c.widths.iter().map(|&w| w as f64).sum::<f64>() / n,
            })
        });
        let stats = json!({
            "axis": s.axis,
            "germs": s.germs.as_ref().map(|g| g.len()),
            "cells": s.tessellation.as_ref().map(|t| t.cells.len()),
            "crack": widths,
            "mask_voxels": s.mask.count(),
            "mask_fraction": s.mask.fraction(),
            "separated": sep.separated,
            "thickness_mean": thickness.as_ref().map(|t| t.mean),
            "gray_model": s.gray_model,
        });
        rep.write_provenance(Task::Crack, self, stats.clone())?;
        Ok(stats)
    }
}
