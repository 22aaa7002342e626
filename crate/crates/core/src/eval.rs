//! Segmentation scores and geometric checks on masks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::edt;
use crate::error::{Error, Result};
use crate::grid::{Axis, LabelMask};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    pub dice: f64,
    pub precision: f64,
    pub recall: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

/// Overlap scores of `prediction` against `truth`. Two empty masks score
/// a dice of 1; precision and recall of an empty denominator are 1 too.
pub fn dice(prediction: &LabelMask, truth: &LabelMask) -> Result<SegScores> {
    truth.dims().expect(prediction.dims())?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&p, &t) in prediction.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok(SegScores {
        dice: ratio(2 * tp, 2 * tp + fp + fn_),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        tp,
        fp,
        fn_,
        tn,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThicknessStats {
    pub bin_width: f64,
    /// `counts[i]` covers `[i, i + 1) * bin_width`.
    pub counts: Vec<u64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Number of medial samples.
    pub samples: usize,
}

impl ThicknessStats {
    pub const BIN_WIDTH: f64 = 0.5;

    pub fn bin_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.bin_width
    }

    /// Center of the most populated bin with center in `[lo, hi]`.
    pub fn mode_in(&self, lo: f64, hi: f64) -> Option<f64> {
        (0..self.counts.len())
            .filter(|&i| (lo..=hi).contains(&self.bin_center(i)) && self.counts[i] > 0)
            .max_by(|&a, &b| self.counts[a].cmp(&self.counts[b]).then(b.cmp(&a)))
            .map(|i| self.bin_center(i))
    }

    /// Bins that hold more samples than every other bin within `radius`
    /// bins and at least `min_share` of the total.
    pub fn peaks(&self, radius: usize, min_share: f64) -> Vec<f64> {
        let total: u64 = self.counts.iter().sum();
        (0..self.counts.len())
            .filter(|&i| {
                let c = self.counts[i];
                c as f64 >= min_share * total as f64
                    && (i.saturating_sub(radius)..(i + radius + 1).min(self.counts.len()))
                        .all(|j| j == i || self.counts[j] < c || (self.counts[j] == c && j > i))
            })
            .map(|i| self.bin_center(i))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let lo = i as f64 * self.bin_width;
            s.push_str(&format!("{},{},{}\n", lo, lo + self.bin_width, c));
        }
        s
    }
}

/// Local thickness sampled on medial voxels.
///
/// `d` is the distance from a voxel center to the nearest background
/// voxel center, so the surface lies `d - ½` away and the local thickness
/// is `2d - 1`. Medial voxels are those whose `d` is not exceeded by any
/// 26-neighbor.
pub fn thickness_stats(mask: &LabelMask) -> Result<ThicknessStats> {
    if mask.is_empty() {
        return Err(Error::Empty("mask"));
    }
    let dims = mask.dims();
    let d = edt::distance_inside(mask);
    let (nx, ny, nz) = (dims.nx as isize, dims.ny as isize, dims.nz as isize);
    let at = |x: isize, y: isize, z: isize| -> f64 {
        if x < 0 || y < 0 || z < 0 || x >= nx || y >= ny || z >= nz {
            0.0
        } else {
            d[dims.index(x as usize, y as usize, z as usize)]
        }
    };
    let mut samples = Vec::new();
    for i in 0..dims.len() {
        if !mask.bits()[i] {
            continue;
        }
        let [x, y, z] = dims.coords(i).map(|v| v as isize);
        let v = d[i];
        let mut medial = true;
        'nb: for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if (dx, dy, dz) != (0, 0, 0) && at(x + dx, y + dy, z + dz) > v {
                        medial = false;
                        break 'nb;
                    }
                }
            }
        }
        if medial {
            samples.push(2.0 * v - 1.0);
        }
    }
    let bw = ThicknessStats::BIN_WIDTH;
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut counts = vec![0u64; (max / bw).floor() as usize + 1];
    for &s in &samples {
        counts[(s / bw).floor() as usize] += 1;
    }
    Ok(ThicknessStats {
        bin_width: bw,
        counts,
        mean: samples.iter().sum::<f64>() / samples.len() as f64,
        min,
        max,
        samples: samples.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub separated: bool,
    pub axis: Axis,
    /// Non-mask voxels 6-connected to the low face.
    pub reachable_voxels: usize,
    /// Mask voxels adjacent to the reachable region: the blocking set that
    /// stopped the flood fill.
    pub blocking_voxels: usize,
    /// A high-face voxel reached from the low face, when not separated.
    pub leak: Option<[usize; 3]>,
}

/// Whether the mask blocks every 6-connected background path between the
/// two faces perpendicular to `axis`.
pub fn separation_check(mask: &LabelMask, axis: Axis) -> SeparationReport {
    let dims = mask.dims();
    let a = axis.index();
    let n_axis = dims.as_array()[a];
    let mut seen = vec![false; dims.len()];
    let mut blocking = vec![false; dims.len()];
    let mut q = VecDeque::new();
    for i in 0..dims.len() {
        if dims.coords(i)[a] == 0 && !mask.bits()[i] {
            seen[i] = true;
            q.push_back(i);
        }
    }
    let mut reached = 0usize;
    let mut leak = None;
    let shape = dims.as_array();
    while let Some(i) = q.pop_front() {
        reached += 1;
        let c = dims.coords(i);
        if c[a] == n_axis - 1 && leak.is_none() {
            leak = Some(c);
        }
        for k in 0..3 {
            for step in [-1isize, 1] {
                let v = c[k] as isize + step;
                if v < 0 || v >= shape[k] as isize {
                    continue;
                }
                let mut nc = c;
                nc[k] = v as usize;
                let j = dims.index(nc[0], nc[1], nc[2]);
                if mask.bits()[j] {
                    blocking[j] = true;
                } else if !seen[j] {
                    seen[j] = true;
                    q.push_back(j);
                }
            }
        }
    }
    SeparationReport {
        separated: leak.is_none(),
        axis,
        reachable_voxels: reached,
        blocking_voxels: blocking.iter().filter(|&&b| b).count(),
        leak,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Dims;

    #[test]
    fn dice_cases() {
        let d = Dims::new(4, 1, 1);
        let m = |bits: [bool; 4]| LabelMask::from_bits(d, bits.to_vec()).unwrap();
        let a = m([true, true, false, false]);
        assert_eq!(dice(&a, &a).unwrap().dice, 1.0);
        assert_eq!(dice(&a, &m([false, false, true, true])).unwrap().dice, 0.0);
        let s = dice(&a, &m([false, true, true, false])).unwrap();
        assert_eq!(s.dice, 0.5);
        assert_eq!((s.tp, s.fp, s.fn_, s.tn), (1, 1, 1, 1));
        let e = m([false; 4]);
        assert_eq!(dice(&e, &e).unwrap().dice, 1.0);
        assert!(dice(&a, &LabelMask::new(Dims::new(2, 2, 1))).is_err());
    }

    #[test]
    fn slab_thickness() {
        let d = Dims::new(12, 12, 20);
        let slab = LabelMask::from_fn(d, |_, _, z| (6..11).contains(&z));
        let t = thickness_stats(&slab).unwrap();
        assert!((t.mean - 5.0).abs() <= 0.5, "{}", t.mean);
        let plane = LabelMask::from_fn(d, |_, _, z| z == 9);
        let t = thickness_stats(&plane).unwrap();
        assert!((1.0..=1.6).contains(&t.mean));
        assert!(thickness_stats(&LabelMask::new(d)).is_err());
    }

    #[test]
    fn separation_cases() {
        let d = Dims::cube(8);
        let plane = LabelMask::from_fn(d, |_, y, _| y == 3);
        assert!(separation_check(&plane, Axis::Y).separated);
        assert!(!separation_check(&plane, Axis::X).separated);
        let r = separation_check(&LabelMask::new(d), Axis::Z);
        assert!(!r.separated);
        assert_eq!(r.reachable_voxels, 512);
        let mut holed = plane.clone();
        holed.set(5, 3, 5, false);
        let r = separation_check(&holed, Axis::Y);
        assert!(!r.separated);
        assert_eq!(r.leak.unwrap()[1], 7);
        assert_eq!(separation_check(&plane, Axis::Y).blocking_voxels, 64);
    }

    #[test]
    fn dice_is_symmetric_and_monotone() {
        let d = Dims::cube(5);
        let a = LabelMask::from_fn(d, |x, y, z| (x + 2 * y + z) % 3 == 0);
        let b = LabelMask::from_fn(d, |x, y, _| x < 3 && y > 1);
        assert_eq!(dice(&a, &b).unwrap().dice, dice(&b, &a).unwrap().dice);
        let mut better = a.clone();
        let i = (0..d.len()).find(|&i| b.bits()[i] && !a.bits()[i]).unwrap();
        better.bits_mut()[i] = true;
        assert!(dice(&better, &b).unwrap().dice > dice(&a, &b).unwrap().dice);
    }
}
