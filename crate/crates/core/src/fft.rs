//! Separable complex FFTs over x-fastest grids.

use rayon::prelude::*;
pub use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::grid::Dims;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// In-place unnormalized transform along every axis with length > 1.
/// The inverse is scaled by `1 / N` so that forward + inverse is identity.
pub fn fft_nd(data: &mut [Complex64], dims: Dims, dir: Direction) {
    assert_eq!(data.len(), dims.len());
    let mut planner = FftPlanner::new();
    let plan = |n: usize, planner: &mut FftPlanner<f64>| match dir {
        Direction::Forward => planner.plan_fft_forward(n),
        Direction::Inverse => planner.plan_fft_inverse(n),
    };
    let (nx, ny, nz) = (dims.nx, dims.ny, dims.nz);
    if nx > 1 {
        let f = plan(nx, &mut planner);
        data.par_chunks_mut(nx).for_each(|line| f.process(line));
    }
    if ny > 1 {
        let f = plan(ny, &mut planner);
        data.par_chunks_mut(nx * ny).for_each(|plane| {
            let mut line = vec![Complex64::default(); ny];
            for x in 0..nx {
                for y in 0..ny {
                    line[y] = plane[x + nx * y];
                }
                f.process(&mut line);
                for y in 0..ny {
                    plane[x + nx * y] = line[y];
                }
            }
        });
    }
    if nz > 1 {
        let f = plan(nz, &mut planner);
        let plane = nx * ny;
        // gather z-lines per y row to keep the parallel split disjoint
        let columns: Vec<Vec<Complex64>> = (0..plane)
            .into_par_iter()
            .map(|xy| {
                let mut line: Vec<Complex64> = (0..nz).map(|z| data[xy + plane * z]).collect();
                f.process(&mut line);
                line
            })
            .collect();
        for (xy, line) in columns.into_iter().enumerate() {
            for (z, v) in line.into_iter().enumerate() {
                data[xy + plane * z] = v;
            }
        }
    }
    if dir == Direction::Inverse {
        let s = 1.0 / dims.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= s);
    }
}

/// Signed integer frequency of bin `k` in a length-`n` transform.
#[inline]
pub fn freq(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Angular frequency `2π·freq/n` of bin `k`.
#[inline]
pub fn omega(k: usize, n: usize) -> f64 {
    2.0 * std::f64::consts::PI * freq(k, n) / n as f64
}

pub fn to_complex(values: &[f32]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v as f64, 0.0)).collect()
}
