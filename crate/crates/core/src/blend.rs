//! Blending crack masks into real CT backgrounds.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dims, Dtype, LabelMask, VoxelVolume};
use crate::rng::RandomStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` ascending edges. A single bin with equal edges
    /// represents a constant sample.
    pub edges: Vec<f64>,
    pub counts: Vec<f64>,
    /// Moments of the samples the histogram was built from.
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GrayModel {
    Gaussian { mean: f64, stddev: f64 },
    Empirical(Histogram),
}

impl GrayModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            GrayModel::Gaussian { mean, stddev } => {
                if !(mean.is_finite() && *stddev >= 0.0 && stddev.is_finite()) {
                    return Err(Error::param("gray_model", "gaussian needs finite mean and stddev >= 0"));
                }
            }
            GrayModel::Empirical(h) => {
                if h.counts.is_empty() || h.edges.len() != h.counts.len() + 1 {
                    return Err(Error::param("gray_model", "histogram needs n bins and n + 1 edges"));
                }
                if h.counts.iter().any(|&c| !(c >= 0.0)) || h.counts.iter().sum::<f64>() <= 0.0 {
                    return Err(Error::param("gray_model", "histogram bins must be non-negative with positive sum"));
                }
                if h.edges.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::param("gray_model", "histogram edges must ascend"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            GrayModel::Gaussian { mean, .. } => *mean,
            GrayModel::Empirical(h) => h.mean,
        }
    }

    pub fn stddev(&self) -> f64 {
        match self {
            GrayModel::Gaussian { stddev, .. } => *stddev,
            GrayModel::Empirical(h) => h.stddev,
        }
    }

    /// Gaussian with the same first two moments.
    pub fn gaussian_fit(&self) -> GrayModel {
        GrayModel::Gaussian {
            mean: self.mean(),
            stddev: self.stddev(),
        }
    }

    /// One gray value, clamped to `[0, 1]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v = match self {
            GrayModel::Gaussian { mean, stddev } => mean + stddev * rng.sample::<f64, _>(StandardNormal),
            GrayModel::Empirical(h) => {
                let total: f64 = h.counts.iter().sum();
                let mut u = rng.random::<f64>() * total;
                let mut bin = h.counts.len() - 1;
                for (i, &c) in h.counts.iter().enumerate() {
                    if u < c {
                        bin = i;
                        break;
                    }
                    u -= c;
                }
                let (lo, hi) = (h.edges[bin], h.edges[bin + 1]);
                lo + rng.random::<f64>() * (hi - lo)
            }
        };
        v.clamp(0.0, 1.0)
    }
}

/// Histogram (with exact sample moments) of the gray values strictly
/// below `air_threshold`.
pub fn estimate_air_gray_model(background: &VoxelVolume, air_threshold: f64, bins: usize) -> Result<GrayModel> {
    let air: Vec<f64> = background
        .data()
        .iter()
        .map(|&v| v as f64)
        .filter(|&v| v < air_threshold)
        .collect();
    if air.is_empty() {
        return Err(Error::NoAirVoxels(air_threshold));
    }
    let n = air.len() as f64;
    let mean = air.iter().sum::<f64>() / n;
    let stddev = (air.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let lo = air.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = air.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bins = if hi > lo { bins.max(1) } else { 1 };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts = vec![0.0; bins];
    for &v in &air {
        let i = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[i] += 1.0;
    }
    Ok(GrayModel::Empirical(Histogram {
        edges,
        counts,
        mean,
        stddev,
    }))
}

/// Replaces gray values inside the mask by `min(background, sample)`.
/// Samples of z-slice `k` come from stream `("blend", k)`.
pub fn fill_mask(background: &VoxelVolume, mask: &LabelMask, model: &GrayModel, stream: RandomStream) -> Result<VoxelVolume> {
    background.dims().expect(mask.dims())?;
    model.validate()?;
    let mut out = background.clone();
    let slice = background.dims().slice_len();
    out.data_mut()
        .par_chunks_mut(slice)
        .zip(mask.bits().par_chunks(slice))
        .enumerate()
        .for_each(|(z, (gray, bits))| {
            let mut rng = stream.substream("blend", z as u64).rng();
            for (g, &b) in gray.iter_mut().zip(bits) {
                if b {
                    let s = model.sample(&mut rng) as f32;
                    *g = g.min(s);
                }
            }
        });
    Ok(out)
}

/// Voxels with a 26-neighbor of the opposite mask state.
pub fn boundary_band(mask: &LabelMask) -> LabelMask {
    let d = mask.dims();
    let mut band = LabelMask::new(d);
    let slice = d.slice_len();
    band.bits_mut().par_chunks_mut(slice).enumerate().for_each(|(z, plane)| {
        for y in 0..d.ny {
            for x in 0..d.nx {
                let v = mask.get(x, y, z);
                let mut differs = false;
                'nb: for zz in z.saturating_sub(1)..=(z + 1).min(d.nz - 1) {
                    for yy in y.saturating_sub(1)..=(y + 1).min(d.ny - 1) {
                        for xx in x.saturating_sub(1)..=(x + 1).min(d.nx - 1) {
                            if mask.get(xx, yy, zz) != v {
                                differs = true;
                                break 'nb;
                            }
                        }
                    }
                }
                plane[x + d.nx * y] = differs;
            }
        }
    });
    band
}

/// Gaussian blur of `volume` evaluated only on `band` voxels; the kernel
/// is truncated at `ceil(3 sigma)` and renormalized at the volume border.
pub fn smooth_band(volume: &VoxelVolume, band: &LabelMask, sigma: f64) -> Result<VoxelVolume> {
    volume.dims().expect(band.dims())?;
    if !(sigma >= 0.0) {
        return Err(Error::param("pv_sigma_vox", "must be non-negative"));
    }
    if sigma == 0.0 {
        return Ok(volume.clone());
    }
    let r = (3.0 * sigma).ceil() as isize;
    let w: Vec<f64> = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let d = volume.dims();
    let src = volume.data();
    let mut out = volume.clone();
    let slice = d.slice_len();
    out.data_mut().par_chunks_mut(slice).enumerate().for_each(|(z, plane)| {
        for y in 0..d.ny {
            for x in 0..d.nx {
                if !band.get(x, y, z) {
                    continue;
                }
                let (mut acc, mut norm) = (0.0, 0.0);
                for dz in -r..=r {
                    let zz = z as isize + dz;
                    if zz < 0 || zz >= d.nz as isize {
                        continue;
                    }
                    for dy in -r..=r {
                        let yy = y as isize + dy;
                        if yy < 0 || yy >= d.ny as isize {
                            continue;
                        }
                        let wzy = w[(dz + r) as usize] * w[(dy + r) as usize];
                        for dx in -r..=r {
                            let xx = x as isize + dx;
                            if xx < 0 || xx >= d.nx as isize {
                                continue;
                            }
                            let k = wzy * w[(dx + r) as usize];
                            acc += k * src[d.index(xx as usize, yy as usize, zz as usize)] as f64;
                            norm += k;
                        }
                    }
                }
                plane[x + d.nx * y] = (acc / norm) as f32;
            }
        }
    });
    Ok(out)
}

/// Fills the mask with air-like gray values, then blurs a one-voxel band
/// around the mask boundary to mimic partial-volume mixing. Voxels off
/// the band and outside the mask keep their background bits.
pub fn blend_into_volume(
    background: &VoxelVolume,
    mask: &LabelMask,
    model: &GrayModel,
    pv_sigma_vox: f64,
    stream: RandomStream,
) -> Result<VoxelVolume> {
    let filled = fill_mask(background, mask, model, stream)?;
    smooth_band(&filled, &boundary_band(mask), pv_sigma_vox)
}

pub const DEFAULT_PV_SIGMA: f64 = 0.7;

/// Stand-in background: `level` plus Gaussian noise, clamped to `[0, 1]`.
/// Slice `z` draws from `substream("background", z)`.
pub fn noise_phantom(dims: Dims, level: f64, stddev: f64, stream: RandomStream) -> Result<VoxelVolume> {
    dims.validate()?;
    if !(0.0..=1.0).contains(&level) || !(stddev >= 0.0 && stddev.is_finite()) {
        return Err(Error::param("level", format!("need level in [0, 1] and stddev >= 0, got {level}, {stddev}")));
    }
    let mut data = vec![0f32; dims.len()];
    data.par_chunks_mut(dims.slice_len()).enumerate().for_each(|(z, plane)| {
        let mut rng = stream.substream("background", z as u64).rng();
        for v in plane {
            *v = (level + stddev * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0) as f32;
        }
    });
    VoxelVolume::new(dims, [1.0; 3], Dtype::F32, data)
}
