//! FIB-SEM slice stacks with shine-through from a 3D solid mask.
//!
//! Slices are imaged at planes `z0 = 0, t, 2t, ...`. Material that has not
//! been milled away yet lies at smaller `z`; pores show it attenuated by
//! `exp(-d / δ)`, where `d` is the depth to the first solid voxel below.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dims, LabelMask, VoxelVolume};
use crate::rng::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemConfig {
    pub slice_thickness_vox: usize,
    pub attenuation_depth_vox: f64,
    pub solid_intensity: f64,
    pub background_intensity: f64,
    pub noise_stddev: f64,
    /// Expected photon count at intensity 1; `None` disables shot noise.
    pub poisson_scale: Option<f64>,
    pub edge_gain: f64,
}

impl Default for SemConfig {
    fn default() -> Self {
        SemConfig {
            slice_thickness_vox: 1,
            attenuation_depth_vox: 10.0,
            solid_intensity: 0.8,
            background_intensity: 0.1,
            noise_stddev: 0.03,
            poisson_scale: None,
            edge_gain: 0.2,
        }
    }
}

impl SemConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::param(name, format!("must lie in [0, 1], got {v}")))
            }
        };
        if self.slice_thickness_vox == 0 {
            return Err(Error::param("slice_thickness_vox", "must be at least 1"));
        }
        if !(self.attenuation_depth_vox > 0.0) {
            return Err(Error::param("attenuation_depth_vox", "must be positive"));
        }
        unit("solid_intensity", self.solid_intensity)?;
        unit("background_intensity", self.background_intensity)?;
        if self.solid_intensity <= self.background_intensity {
            return Err(Error::param("solid_intensity", "must exceed background_intensity"));
        }
        if !(self.noise_stddev >= 0.0) || !(self.edge_gain >= 0.0) {
            return Err(Error::param("noise_stddev", "noise_stddev and edge_gain must be non-negative"));
        }
        if let Some(s) = self.poisson_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::param("poisson_scale", "must be positive"));
            }
        }
        Ok(())
    }

    /// Pre-noise pore intensity at depth `d` voxels to the nearest solid.
    pub fn pore_intensity(&self, depth: f64) -> f64 {
        let (s, b) = (self.solid_intensity, self.background_intensity);
        b + (s - b) * (-depth / self.attenuation_depth_vox).exp()
    }
}

/// Images and ground truth stacked along z, one slice per imaged plane.
#[derive(Clone, Debug, PartialEq)]
pub struct SemStack {
    pub images: VoxelVolume,
    pub truth: LabelMask,
    pub planes: Vec<usize>,
}

fn planes(nz: usize, t: usize) -> Vec<usize> {
    (0..nz).step_by(t).collect()
}

/// Noise-free intensities of every imaged plane.
pub fn sem_signal(solid: &LabelMask, cfg: &SemConfig) -> Result<SemStack> {
    cfg.validate()?;
    let d = solid.dims();
    if d.nz < cfg.slice_thickness_vox {
        return Err(Error::param("slice_thickness_vox", format!("exceeds volume depth {}", d.nz)));
    }
    let planes = planes(d.nz, cfg.slice_thickness_vox);
    let slice = d.slice_len();
    // z index of the last solid voxel strictly below each plane, per column
    let mut below: Vec<Vec<i64>> = Vec::with_capacity(planes.len());
    let mut last = vec![-1i64; slice];
    let mut next = 0;
    for z in 0..d.nz {
        if next < planes.len() && planes[next] == z {
            below.push(last.clone());
            next += 1;
        }
        for (i, l) in last.iter_mut().enumerate() {
            if solid.bits()[i + slice * z] {
                *l = z as i64;
            }
        }
    }
    let out_dims = Dims::new(d.nx, d.ny, planes.len());
    let mut images = VoxelVolume::filled(out_dims, 0.0);
    let mut truth = LabelMask::new(out_dims);
    let at = |x: isize, y: isize, z: isize| -> f64 {
        let c = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
        solid.get(c(x, d.nx), c(y, d.ny), c(z, d.nz)) as u8 as f64
    };
    images
        .data_mut()
        .par_chunks_mut(slice)
        .zip(truth.bits_mut().par_chunks_mut(slice))
        .enumerate()
        .for_each(|(k, (img, gt))| {
            let z0 = planes[k];
            for y in 0..d.ny {
                for x in 0..d.nx {
                    let i = x + d.nx * y;
                    let v = if solid.get(x, y, z0) {
                        gt[i] = true;
                        let (xi, yi, zi) = (x as isize, y as isize, z0 as isize);
                        let g = [
                            (at(xi + 1, yi, zi) - at(xi - 1, yi, zi)) / 2.0,
                            (at(xi, yi + 1, zi) - at(xi, yi - 1, zi)) / 2.0,
                            (at(xi, yi, zi + 1) - at(xi, yi, zi - 1)) / 2.0,
                        ];
                        let grad = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                        cfg.solid_intensity + cfg.edge_gain * grad
                    } else {
                        let l = below[k][i];
                        if l < 0 {
                            cfg.background_intensity
                        } else {
                            cfg.pore_intensity((z0 as i64 - l) as f64)
                        }
                    };
                    img[i] = v.clamp(0.0, 1.0) as f32;
                }
            }
        });
    Ok(SemStack { images, truth, planes })
}

/// Signal plus shot and Gaussian noise; slice `k` draws from stream
/// `("slice", k)`.
pub fn simulate_sem_stack(solid: &LabelMask, cfg: &SemConfig, stream: RandomStream) -> Result<SemStack> {
    let mut stack = sem_signal(solid, cfg)?;
    let slice = stack.images.dims().slice_len();
    stack.images.data_mut().par_chunks_mut(slice).enumerate().for_each(|(k, img)| {
        let mut rng = stream.substream("slice", k as u64).rng();
        for v in img.iter_mut() {
            let mut x = *v as f64;
            if let Some(scale) = cfg.poisson_scale {
                let mean = x * scale;
                x = if mean > 0.0 { Poisson::new(mean).expect("positive mean").sample(&mut rng) / scale } else { 0.0 };
            }
            if cfg.noise_stddev > 0.0 {
                x += cfg.noise_stddev * rng.sample::<f64, _>(StandardNormal);
            }
            *v = x.clamp(0.0, 1.0) as f32;
        }
    });
    Ok(stack)
}

/// Maps values onto the reference distribution by rank: the value of
/// rank `r` among `n` becomes the reference quantile `r / (n - 1)`. Ties
/// are broken by position, so the result is deterministic.
pub fn match_histogram(values: &mut [f32], reference: &[f32]) -> Result<()> {
    if reference.is_empty() {
        return Err(Error::Empty("reference histogram"));
    }
    if values.is_empty() {
        return Ok(());
    }
    let mut sorted_ref = reference.to_vec();
    sorted_ref.sort_by(f32::total_cmp);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let n = values.len();
    let m = sorted_ref.len();
    for (rank, &i) in order.iter().enumerate() {
        let q = if n == 1 { 0.5 } else { rank as f64 / (n - 1) as f64 };
        values[i] = sorted_ref[((q * (m - 1) as f64).round() as usize).min(m - 1)];
    }
    Ok(())
}
