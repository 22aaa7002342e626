//! Exact Euclidean distance transforms (lower-envelope of parabolas,
//! one pass per axis).

use rayon::prelude::*;

use crate::grid::{Dims, LabelMask};

const INF: f64 = 1e20;

fn transform_line(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        out[q] = d * d + f[v[k]];
    }
}

fn pass(data: &mut [f64], dims: Dims, axis: usize) {
    let [nx, ny, nz] = dims.as_array();
    let n = dims.as_array()[axis];
    if n == 1 {
        return;
    }
    let stride = [1, nx, nx * ny][axis];
    let lines: Vec<usize> = match axis {
        0 => (0..ny * nz).map(|l| l * nx).collect(),
        1 => (0..nz).flat_map(|z| (0..nx).map(move |x| x + nx * ny * z)).collect(),
        _ => (0..nx * ny).collect(),
    };
    let results: Vec<Vec<f64>> = lines
        .par_iter()
        .map_init(
            || (vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]),
            |(f, v, z), &start| {
                for i in 0..n {
                    f[i] = data[start + i * stride];
                }
                let mut out = vec![0.0; n];
                transform_line(f, &mut out, v, z);
                out
            },
        )
        .collect();
    for (&start, line) in lines.iter().zip(results) {
        for (i, d) in line.into_iter().enumerate() {
            data[start + i * stride] = d;
        }
    }
}

/// Squared distance (voxel units) from every voxel center to the nearest
/// voxel where `feature` is true. All-`INF` (1e20) when there is none.
pub fn squared_distance_to(feature: &LabelMask) -> Vec<f64> {
    let dims = feature.dims();
    let mut data: Vec<f64> = feature.bits().iter().map(|&b| if b { 0.0 } else { INF }).collect();
    for axis in 0..3 {
        pass(&mut data, dims, axis);
    }
    data
}

/// Distance from every voxel to the nearest voxel outside `mask`; zero on
/// the background. Voxels outside the grid count as background.
pub fn distance_inside(mask: &LabelMask) -> Vec<f64> {
    let d = mask.dims();
    let padded_dims = Dims::new(d.nx + 2, d.ny + 2, d.nz + 2);
    let padded = LabelMask::from_fn(padded_dims, |x, y, z| {
        let inside = (1..=d.nx).contains(&x) && (1..=d.ny).contains(&y) && (1..=d.nz).contains(&z);
        !(inside && mask.get(x - 1, y - 1, z - 1))
    });
    let sq = squared_distance_to(&padded);
    let mut out = vec![0.0; d.len()];
    for z in 0..d.nz {
        for y in 0..d.ny {
            for x in 0..d.nx {
                out[d.index(x, y, z)] = sq[padded_dims.index(x + 1, y + 1, z + 1)].sqrt();
            }
        }
    }
    out
}

/// Voxels within Euclidean distance `radius` of `mask`.
pub fn dilate(mask: &LabelMask, radius: f64) -> LabelMask {
    if mask.is_empty() {
        return mask.clone();
    }
    let sq = squared_distance_to(mask);
    let r2 = radius * radius + 1e-9;
    LabelMask::from_bits(mask.dims(), sq.into_iter().map(|d| d <= r2).collect()).expect("same dims")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use rand::Rng;

    #[test]
    fn matches_brute_force() {
        let dims = Dims::new(9, 7, 6);
        let mut rng = RandomStream::new(3, 0).rng();
        let mask = LabelMask::from_fn(dims, |_, _, _| rng.random::<f64>() < 0.05);
        let sq = squared_distance_to(&mask);
        let feats: Vec<[usize; 3]> = (0..dims.len()).filter(|&i| mask.bits()[i]).map(|i| dims.coords(i)).collect();
        for i in 0..dims.len() {
            let c = dims.coords(i);
            let best = feats
                .iter()
                .map(|f| (0..3).map(|k| (f[k] as f64 - c[k] as f64).powi(2)).sum::<f64>())
                .fold(INF, f64::min);
            assert_eq!(sq[i], best, "voxel {c:?}");
        }
    }

    #[test]
    fn slab_depth() {
        let dims = Dims::new(5, 5, 11);
        let mask = LabelMask::from_fn(dims, |_, _, z| (3..8).contains(&z));
        let d = distance_inside(&mask);
        assert_eq!(d[dims.index(2, 2, 5)], 3.0);
        assert_eq!(d[dims.index(2, 2, 3)], 1.0);
        assert_eq!(d[dims.index(2, 2, 0)], 0.0);
    }

    #[test]
    fn dilation_of_point_is_ball() {
        let dims = Dims::cube(15);
        let mask = LabelMask::from_fn(dims, |x, y, z| (x, y, z) == (7, 7, 7));
        let ball = dilate(&mask, 3.0);
        let expect = (0..dims.len())
            .filter(|&i| {
                let c = dims.coords(i);
                (0..3).map(|k| (c[k] as f64 - 7.0).powi(2)).sum::<f64>() <= 9.0
            })
            .count();
        assert_eq!(ball.count(), expect);
    }
}
