//! Hessian plate detection, hysteresis region growing and multiscale
//! application of volume operators.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Dims, LabelMask, VoxelVolume};
use crate::riesz::{riesz2_matrix, Boundary};

/// Separable Gaussian blur with kernel radius `ceil(4 sigma)` and
/// reflected borders.
pub fn gaussian_smooth(data: &[f64], dims: Dims, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let r = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let mut cur = data.to_vec();
    let shape = dims.as_array();
    for axis in 0..3 {
        let n = shape[axis];
        if n == 1 {
            continue;
        }
        let stride = [1, dims.nx, dims.nx * dims.ny][axis];
        let reflect = |i: isize| -> usize {
            let p = 2 * n as isize;
            let m = i.rem_euclid(p);
            (if m < n as isize { m } else { p - 1 - m }) as usize
        };
        let src = cur.clone();
        cur.par_iter_mut().enumerate().for_each(|(idx, out)| {
            let c = dims.coords(idx)[axis] as isize;
            let base = idx - c as usize * stride;
            let mut acc = 0.0;
            for (t, w) in k.iter().enumerate() {
                acc += w * src[base + reflect(c + t as isize - r) * stride];
            }
            *out = acc;
        });
    }
    cur
}

/// Eigenvalues of a symmetric 3x3 matrix `[a00, a01, a02, a11, a12, a22]`,
/// descending.
pub fn sym3_eigenvalues(m: [f64; 6]) -> [f64; 3] {
    let [a, b, c, d, e, f] = m;
    let p1 = b * b + c * c + e * e;
    let q = (a + d + f) / 3.0;
    if p1 <= 1e-30 * (a * a + d * d + f * f).max(1e-300) {
        let mut v = [a, d, f];
        v.sort_by(|x, y| y.total_cmp(x));
        return v;
    }
    let p2 = (a - q).powi(2) + (d - q).powi(2) + (f - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let (ba, bd, bf, bb, bc, be) = ((a - q) / p, (d - q) / p, (f - q) / p, b / p, c / p, e / p);
    let det = ba * (bd * bf - be * be) - bb * (bb * bf - be * bc) + bc * (bb * be - bd * bc);
    let r = (det / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let l1 = q + 2.0 * p * phi.cos();
    let l3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [l1, 3.0 * q - l1 - l3, l3]
}

fn sym2_eigenvalues(a: f64, b: f64, d: f64) -> [f64; 2] {
    let m = (a + d) / 2.0;
    let r = ((a - d).powi(2) / 4.0 + b * b).sqrt();
    [m + r, m - r]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CracknessParams {
    pub sigma: f64,
    /// Plate-ness sensitivity to `λ1 / Σ|λ|`.
    pub alpha: f64,
    /// Structure sensitivity to `λ1² / c²`.
    pub beta: f64,
    /// Contrast scale `c` of the σ²-normalized curvature.
    pub contrast: f64,
}

impl Default for CracknessParams {
    fn default() -> Self {
        CracknessParams { sigma: 1.25, alpha: 0.5, beta: 2.0, contrast: 0.05 }
    }
}

impl CracknessParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.5 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", "must be at least 0.5"));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.contrast > 0.0) {
            return Err(Error::param("alpha", "alpha, beta and contrast must be positive"));
        }
        Ok(())
    }

    /// Measure in `[0, 1]` from descending eigenvalues; zero unless the
    /// largest is positive (dark plate in a brighter matrix).
    pub fn plate_measure(&self, l: &[f64]) -> f64 {
        let l1 = l[0];
        if !(l1 > 0.0) {
            return 0.0;
        }
        let sum: f64 = l.iter().map(|v| v.abs()).sum();
        let ratio = l1 / sum;
        (1.0 - (-(ratio * ratio) / self.alpha).exp()) * (1.0 - (-(l1 * l1) / (self.beta * self.contrast * self.contrast)).exp())
    }
}

fn central_second(s: &[f64], dims: Dims, x: usize, y: usize, z: usize, a: usize, b: usize) -> f64 {
    let shape = dims.as_array();
    let c = [x, y, z];
    let at = |off: [isize; 3]| {
        let p: Vec<usize> = (0..3).map(|k| (c[k] as isize + off[k]).clamp(0, shape[k] as isize - 1) as usize).collect();
        s[dims.index(p[0], p[1], p[2])]
    };
    let mut e = [[0isize; 3]; 2];
    e[0][a] = 1;
    e[1][b] = 1;
    if a == b {
        if shape[a] == 1 {
            return 0.0;
        }
        at(e[0]) - 2.0 * at([0; 3]) + at(e[0].map(|v| -v))
    } else {
        if shape[a] == 1 || shape[b] == 1 {
            return 0.0;
        }
        let add = |u: [isize; 3], v: [isize; 3], su: isize, sv: isize| [0, 1, 2].map(|k| su * u[k] + sv * v[k]);
        (at(add(e[0], e[1], 1, 1)) - at(add(e[0], e[1], 1, -1)) - at(add(e[0], e[1], -1, 1)) + at(add(e[0], e[1], -1, -1))) / 4.0
    }
}

/// Plate measure of the σ²-normalized Hessian of the Gaussian-smoothed
/// volume, in `[0, 1]`.
pub fn hessian_crackness(volume: &VoxelVolume, params: CracknessParams) -> Result<VoxelVolume> {
    params.validate()?;
    let dims = volume.dims();
    let data: Vec<f64> = volume.data().iter().map(|&v| v as f64).collect();
    let s = gaussian_smooth(&data, dims, params.sigma);
    let scale = params.sigma * params.sigma;
    let three_d = dims.nz > 1;
    let out: Vec<f32> = (0..dims.len())
        .into_par_iter()
        .map(|i| {
            let [x, y, z] = dims.coords(i);
            let h = |a, b| scale * central_second(&s, dims, x, y, z, a, b);
            let m = if three_d {
                params.plate_measure(&sym3_eigenvalues([h(0, 0), h(0, 1), h(0, 2), h(1, 1), h(1, 2), h(2, 2)]))
            } else {
                params.plate_measure(&sym2_eigenvalues(h(0, 0), h(0, 1), h(1, 1)))
            };
            m as f32
        })
        .collect();
    VoxelVolume::new(dims, volume.spacing_um(), crate::grid::Dtype::F32, out)
}

/// Plate measure of the second-order Riesz matrix of a difference of
/// Gaussians (`sigma`, `2 sigma`) of the volume. Along a plate normal the
/// matrix reduces to minus the band-passed profile.
pub fn riesz_crackness(volume: &VoxelVolume, params: CracknessParams) -> Result<VoxelVolume> {
    params.validate()?;
    let dims = volume.dims();
    let data: Vec<f64> = volume.data().iter().map(|&v| v as f64).collect();
    // band-pass first so the response stays local
    let fine = gaussian_smooth(&data, dims, params.sigma);
    let coarse = gaussian_smooth(&data, dims, 2.0 * params.sigma);
    let s: Vec<f64> = fine.iter().zip(&coarse).map(|(a, b)| a - b).collect();
    let m = riesz2_matrix(&s, dims, Boundary::Mirror { width: 8 })?;
    let out: Vec<f32> = (0..dims.len())
        .into_par_iter()
        .map(|i| {
            let v = if m.len() == 6 {
                params.plate_measure(&sym3_eigenvalues([m[0][i], m[1][i], m[2][i], m[3][i], m[4][i], m[5][i]]))
            } else {
                params.plate_measure(&sym2_eigenvalues(m[0][i], m[1][i], m[2][i]))
            };
            v as f32
        })
        .collect();
    VoxelVolume::new(dims, volume.spacing_um(), crate::grid::Dtype::F32, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PercolationParams {
    pub smoothing_sigma_vox: f64,
    /// Seeds are voxels at or above this measure.
    pub planarity_threshold: f64,
    /// Regions grow through 26-neighbors at or above this measure.
    pub grow_threshold: f64,
    pub min_component_vox: usize,
}

impl Default for PercolationParams {
    fn default() -> Self {
        PercolationParams {
            smoothing_sigma_vox: 1.25,
            planarity_threshold: 0.4,
            grow_threshold: 0.2,
            min_component_vox: 64,
        }
    }
}

impl PercolationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing_sigma_vox > 0.0) {
            return Err(Error::param("smoothing_sigma_vox", "must be positive"));
        }
        if !(self.grow_threshold <= self.planarity_threshold) {
            return Err(Error::param("grow_threshold", "must not exceed planarity_threshold"));
        }
        Ok(())
    }
}

fn for_26<F: FnMut(usize)>(dims: Dims, i: usize, mut f: F) {
    let [x, y, z] = dims.coords(i);
    for zz in z.saturating_sub(1)..=(z + 1).min(dims.nz - 1) {
        for yy in y.saturating_sub(1)..=(y + 1).min(dims.ny - 1) {
            for xx in x.saturating_sub(1)..=(x + 1).min(dims.nx - 1) {
                let j = dims.index(xx, yy, zz);
                if j != i {
                    f(j);
                }
            }
        }
    }
}

/// Hysteresis region growing from seeds, then removal of 26-connected
/// components smaller than `min_component_vox`.
pub fn percolation_segment(measure: &VoxelVolume, params: &PercolationParams) -> Result<LabelMask> {
    params.validate()?;
    let dims = measure.dims();
    let m = measure.data();
    let hi = params.planarity_threshold as f32;
    let lo = params.grow_threshold as f32;
    let mut grown = vec![false; dims.len()];
    let mut q: VecDeque<usize> = VecDeque::new();
    for i in 0..dims.len() {
        if m[i] >= hi && m[i] > 0.0 {
            grown[i] = true;
            q.push_back(i);
        }
    }
    while let Some(i) = q.pop_front() {
        for_26(dims, i, |j| {
            if !grown[j] && m[j] >= lo && m[j] > 0.0 {
                grown[j] = true;
                q.push_back(j);
            }
        });
    }
    let mut keep = vec![false; dims.len()];
    let mut seen = vec![false; dims.len()];
    let mut comp = Vec::new();
    for s in 0..dims.len() {
        if !grown[s] || seen[s] {
            continue;
        }
        comp.clear();
        seen[s] = true;
        q.push_back(s);
        while let Some(i) = q.pop_front() {
            comp.push(i);
            for_26(dims, i, |j| {
                if grown[j] && !seen[j] {
                    seen[j] = true;
                    q.push_back(j);
                }
            });
        }
        if comp.len() >= params.min_component_vox {
            for &i in &comp {
                keep[i] = true;
            }
        }
    }
    LabelMask::from_bits(dims, keep)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Hessian,
    RieszFeatures,
}

/// Crackness measure (max over `n_scales` dyadic scales) followed by
/// percolation. The smoothing scale is `percolation.smoothing_sigma_vox`;
/// `plate.sigma` is ignored.
pub fn segment_cracks(
    volume: &VoxelVolume,
    method: Method,
    plate: CracknessParams,
    percolation: &PercolationParams,
    n_scales: usize,
) -> Result<LabelMask> {
    percolation.validate()?;
    let plate = CracknessParams { sigma: percolation.smoothing_sigma_vox, ..plate };
    let op = |v: &VoxelVolume| match method {
        Method::Hessian => hessian_crackness(v, plate),
        Method::RieszFeatures => riesz_crackness(v, plate),
    };
    let measure = multiscale_apply(volume, op, n_scales)?;
    percolation_segment(&measure, percolation)
}

/// Block-average downscaling by 2 on every axis longer than 1; a trailing
/// odd sample is averaged over the part of the block that exists.
pub fn downscale2(volume: &VoxelVolume) -> VoxelVolume {
    let d = volume.dims();
    let half = |n: usize| if n == 1 { 1 } else { n.div_ceil(2) };
    let nd = Dims::new(half(d.nx), half(d.ny), half(d.nz));
    let f = |n: usize| if n == 1 { 1 } else { 2 };
    let (fx, fy, fz) = (f(d.nx), f(d.ny), f(d.nz));
    let sp = volume.spacing_um();
    VoxelVolume::from_fn(nd, |x, y, z| {
        let (mut acc, mut n) = (0.0f64, 0usize);
        for zz in z * fz..((z + 1) * fz).min(d.nz) {
            for yy in y * fy..((y + 1) * fy).min(d.ny) {
                for xx in x * fx..((x + 1) * fx).min(d.nx) {
                    acc += volume.get(xx, yy, zz) as f64;
                    n += 1;
                }
            }
        }
        (acc / n as f64) as f32
    })
    .with_spacing([sp[0] * fx as f64, sp[1] * fy as f64, sp[2] * fz as f64])
}

/// Trilinear interpolation onto `dims`, mapping voxel centers.
pub fn upscale_to(volume: &VoxelVolume, dims: Dims) -> VoxelVolume {
    let s = volume.dims().as_array();
    let t = dims.as_array();
    let coord = |i: usize, k: usize| -> (usize, usize, f64) {
        if s[k] == 1 {
            return (0, 0, 0.0);
        }
        let u = ((i as f64 + 0.5) * s[k] as f64 / t[k] as f64 - 0.5).clamp(0.0, (s[k] - 1) as f64);
        let i0 = u.floor() as usize;
        let i1 = (i0 + 1).min(s[k] - 1);
        (i0, i1, u - i0 as f64)
    };
    VoxelVolume::from_fn(dims, |x, y, z| {
        let (x0, x1, fx) = coord(x, 0);
        let (y0, y1, fy) = coord(y, 1);
        let (z0, z1, fz) = coord(z, 2);
        let g = |a, b, c| volume.get(a, b, c) as f64;
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(g(x0, y0, z0), g(x1, y0, z0), fx);
        let c10 = lerp(g(x0, y1, z0), g(x1, y1, z0), fx);
        let c01 = lerp(g(x0, y0, z1), g(x1, y0, z1), fx);
        let c11 = lerp(g(x0, y1, z1), g(x1, y1, z1), fx);
        lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz) as f32
    })
    .with_spacing(volume.spacing_um())
}

/// Applies `op` at scales `1, 2, 4, ...` and combines the upscaled
/// results by pointwise maximum.
pub fn multiscale_apply<F>(volume: &VoxelVolume, op: F, n_scales: usize) -> Result<VoxelVolume>
where
    F: Fn(&VoxelVolume) -> Result<VoxelVolume>,
{
    if n_scales == 0 {
        return Err(Error::param("n_scales", "must be at least 1"));
    }
    let d = volume.dims();
    let factor = 1usize << (n_scales - 1);
    let active: Vec<usize> = d.as_array().into_iter().filter(|&n| n > 1).collect();
    if active.iter().any(|&n| n / factor < 4) {
        return Err(Error::TooSmall(format!("{:?} is too small for {n_scales} scales", d.as_array())));
    }
    let mut combined = op(volume)?;
    let mut level = volume.clone();
    for _ in 1..n_scales {
        level = downscale2(&level);
        let r = upscale_to(&op(&level)?, d);
        for (c, v) in combined.data_mut().iter_mut().zip(r.data()) {
            *c = c.max(*v);
        }
    }
    Ok(combined)
}
