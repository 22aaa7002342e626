//! First- and second-order Riesz transforms on 2D images (`nz == 1`) and
//! 3D volumes.
//!
//! Multipliers are `-i ξ_j / |ξ|` and `-ξ_j ξ_k / |ξ|²` on the centered
//! integer frequency grid, scaled per axis by the grid length so that the
//! transform acts on physical (voxel) frequencies. The DC bin is zero.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fft_nd, omega, Direction};
use crate::grid::{Axis, Dims, VoxelVolume};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Boundary {
    /// The field is treated as one period; all identities hold exactly.
    #[default]
    Periodic,
    /// Mirror-pad by `width` voxels on every active axis, crop afterwards.
    Mirror { width: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Multiplier {
    First(usize),
    Second(usize, usize),
}

fn active_axes(dims: Dims) -> usize {
    if dims.nz == 1 {
        2
    } else {
        3
    }
}

fn check(dims: Dims, m: Multiplier) -> Result<()> {
    let n = active_axes(dims);
    let shape = dims.as_array();
    if shape[..n].iter().any(|&s| s < 4) {
        return Err(Error::TooSmall(format!("riesz transform needs at least 4 samples per axis, got {shape:?}")));
    }
    let (a, b) = match m {
        Multiplier::First(j) => (j, j),
        Multiplier::Second(j, k) => (j, k),
    };
    if a >= n || b >= n {
        return Err(Error::param("axis", format!("axis index must be below {n} for dims {shape:?}")));
    }
    Ok(())
}

fn mirror_pad(data: &[f64], dims: Dims, w: usize) -> (Vec<f64>, Dims) {
    let n = active_axes(dims);
    let pw = |k: usize| if k < n { w } else { 0 };
    let shape = dims.as_array();
    let pd = Dims::new(shape[0] + 2 * pw(0), shape[1] + 2 * pw(1), shape[2] + 2 * pw(2));
    // symmetric reflection (edge sample repeated)
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let p = 2 * n;
        let m = i.rem_euclid(p);
        (if m < n { m } else { p - 1 - m }) as usize
    };
    let mut out = vec![0.0; pd.len()];
    out.par_chunks_mut(pd.slice_len()).enumerate().for_each(|(z, plane)| {
        let sz = reflect(z as isize - pw(2) as isize, shape[2]);
        for y in 0..pd.ny {
            let sy = reflect(y as isize - pw(1) as isize, shape[1]);
            for x in 0..pd.nx {
                let sx = reflect(x as isize - pw(0) as isize, shape[0]);
                plane[x + pd.nx * y] = data[dims.index(sx, sy, sz)];
            }
        }
    });
    (out, pd)
}

fn crop(data: &[f64], padded: Dims, dims: Dims, w: usize) -> Vec<f64> {
    let n = active_axes(dims);
    let pw = |k: usize| if k < n { w } else { 0 };
    let mut out = vec![0.0; dims.len()];
    for z in 0..dims.nz {
        for y in 0..dims.ny {
            for x in 0..dims.nx {
                out[dims.index(x, y, z)] = data[padded.index(x + pw(0), y + pw(1), z + pw(2))];
            }
        }
    }
    out
}

fn apply_periodic(data: &[f64], dims: Dims, multipliers: &[Multiplier]) -> Vec<Vec<f64>> {
    let mut spec: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut spec, dims, Direction::Forward);
    let shape = dims.as_array();
    multipliers
        .iter()
        .map(|&m| {
            let mut s = spec.clone();
            s.par_chunks_mut(dims.slice_len()).enumerate().for_each(|(z, plane)| {
                let wz = if shape[2] > 1 { omega(z, shape[2]) } else { 0.0 };
                for y in 0..dims.ny {
                    let wy = omega(y, shape[1]);
                    for x in 0..dims.nx {
                        let w = [omega(x, shape[0]), wy, wz];
                        let n2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
                        let c = &mut plane[x + dims.nx * y];
                        if n2 == 0.0 {
                            *c = Complex64::default();
                            continue;
                        }
                        *c = match m {
                            Multiplier::First(j) => *c * Complex64::new(0.0, -w[j] / n2.sqrt()),
                            Multiplier::Second(j, k) => *c * (-w[j] * w[k] / n2),
                        };
                    }
                }
            });
            // the Nyquist bin of an even axis has no conjugate partner; the
            // real part is the transform of the real input
            fft_nd(&mut s, dims, Direction::Inverse);
            s.into_iter().map(|c| c.re).collect()
        })
        .collect()
}

/// Applies every multiplier in `multipliers` to the same field.
pub fn riesz_many(data: &[f64], dims: Dims, multipliers: &[Multiplier], boundary: Boundary) -> Result<Vec<Vec<f64>>> {
    if data.len() != dims.len() {
        return Err(Error::DimMismatch { expected: dims.as_array(), found: [data.len(), 1, 1] });
    }
    for &m in multipliers {
        check(dims, m)?;
    }
    match boundary {
        Boundary::Periodic => Ok(apply_periodic(data, dims, multipliers)),
        Boundary::Mirror { width } => {
            let (padded, pd) = mirror_pad(data, dims, width);
            Ok(apply_periodic(&padded, pd, multipliers)
                .into_iter()
                .map(|r| crop(&r, pd, dims, width))
                .collect())
        }
    }
}

pub fn riesz1_f64(data: &[f64], dims: Dims, axis: usize, boundary: Boundary) -> Result<Vec<f64>> {
    Ok(riesz_many(data, dims, &[Multiplier::First(axis)], boundary)?.remove(0))
}

pub fn riesz2_f64(data: &[f64], dims: Dims, axes: (usize, usize), boundary: Boundary) -> Result<Vec<f64>> {
    Ok(riesz_many(data, dims, &[Multiplier::Second(axes.0, axes.1)], boundary)?.remove(0))
}

fn wrap(volume: &VoxelVolume, data: Vec<f64>) -> VoxelVolume {
    VoxelVolume::new(volume.dims(), volume.spacing_um(), crate::grid::Dtype::F32, data.into_iter().map(|v| v as f32).collect())
        .expect("same dims")
}

fn as_f64(volume: &VoxelVolume) -> Vec<f64> {
    volume.data().iter().map(|&v| v as f64).collect()
}

pub fn riesz1(volume: &VoxelVolume, axis: Axis, boundary: Boundary) -> Result<VoxelVolume> {
    let r = riesz1_f64(&as_f64(volume), volume.dims(), axis.index(), boundary)?;
    Ok(wrap(volume, r))
}

pub fn riesz2(volume: &VoxelVolume, axes: (Axis, Axis), boundary: Boundary) -> Result<VoxelVolume> {
    let r = riesz2_f64(&as_f64(volume), volume.dims(), (axes.0.index(), axes.1.index()), boundary)?;
    Ok(wrap(volume, r))
}

/// Upper triangle of the second-order Riesz matrix, ordered
/// `(0,0), (0,1), (0,2), (1,1), (1,2), (2,2)` in 3D and
/// `(0,0), (0,1), (1,1)` in 2D.
pub fn riesz2_matrix(data: &[f64], dims: Dims, boundary: Boundary) -> Result<Vec<Vec<f64>>> {
    let n = active_axes(dims);
    let pairs: Vec<Multiplier> = (0..n).flat_map(|j| (j..n).map(move |k| Multiplier::Second(j, k))).collect();
    riesz_many(data, dims, &pairs, boundary)
}
