//! Crack ground truth: minimum-area facet cuts through a Voronoi
//! tessellation, per-facet width fields, voxelization by distance-bounded
//! dilation, and fractional Brownian surface cracks.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::edt;
use crate::error::{Error, Result};
use crate::fft::{self, Direction};
use crate::flow::FlowNetwork;
use crate::grid::{Axis, Dims, LabelMask};
use crate::points::Point3;
use crate::rng::RandomStream;
use crate::tessellation::{cross, dot, facet_graph, norm, sub, Tessellation};

/// A terminal-separating set of tessellation facets with a width per facet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrackSurface {
    pub axis: Axis,
    /// Facet ids, ascending.
    pub facet_ids: Vec<usize>,
    /// Total thickness in voxels, parallel to `facet_ids`.
    pub widths: Vec<u32>,
    /// Sum of cut facet areas, accumulated in ascending facet order.
    pub cut_weight: f64,
}

impl CrackSurface {
    pub fn len(&self) -> usize {
        self.facet_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facet_ids.is_empty()
    }

    pub fn with_constant_width(mut self, w: u32) -> Self {
        self.widths = vec![w; self.facet_ids.len()];
        self
    }
}

/// Minimum-area set of facets separating the cells on the low wall along
/// `axis` from those on the high wall. Widths start at 1.
pub fn min_cut_crack(tess: &Tessellation, axis: Axis) -> Result<CrackSurface> {
    let g = facet_graph(tess, axis);
    let (s, t) = (g.source(), g.sink());
    let mut net = FlowNetwork::new(g.n_cells + 2);
    for &(a, b, _, w) in &g.edges {
        net.add_undirected(a, b, w);
    }
    for &c in &g.source_cells {
        net.add_undirected(s, c, f64::INFINITY);
    }
    for &c in &g.sink_cells {
        net.add_undirected(c, t, f64::INFINITY);
    }
    let flow = net.max_flow(s, t);
    if !flow.is_finite() {
        return Err(Error::NoFiniteCut(format!(
            "a cell touches both walls along {axis:?}; use more germs"
        )));
    }
    let side = net.source_side(s);
    let mut facet_ids: Vec<usize> = g
        .edges
        .iter()
        .filter(|e| side[e.0] != side[e.1])
        .map(|e| e.2)
        .collect();
    facet_ids.sort_unstable();
    let cut_weight = facet_ids.iter().map(|&f| tess.facets[f].area).sum();
    Ok(CrackSurface {
        axis,
        widths: vec![1; facet_ids.len()],
        facet_ids,
        cut_weight,
    })
}

/// Union of the minimum cuts along several axes, for branched cracks.
pub fn union_of_cuts(tess: &Tessellation, axes: &[Axis]) -> Result<CrackSurface> {
    let first = *axes.first().ok_or(Error::Empty("axes"))?;
    let mut ids = Vec::new();
    for &a in axes {
        ids.extend(min_cut_crack(tess, a)?.facet_ids);
    }
    ids.sort_unstable();
    ids.dedup();
    Ok(CrackSurface {
        axis: first,
        widths: vec![1; ids.len()],
        cut_weight: ids.iter().map(|&f| tess.facets[f].area).sum(),
        facet_ids: ids,
    })
}

/// Edge adjacency between the facets of `crack`, as local indices.
/// Two facets are adjacent when they share two polygon vertices.
pub fn crack_adjacency(tess: &Tessellation, crack: &CrackSurface) -> Vec<Vec<usize>> {
    let tol = 1e-7 * norm(&tess.window.extent());
    let n = crack.facet_ids.len();
    let mut by_cell: std::collections::HashMap<usize, Vec<usize>> = std::collections::HashMap::new();
    for (li, &f) in crack.facet_ids.iter().enumerate() {
        let (a, b) = tess.facets[f].cells;
        by_cell.entry(a).or_default().push(li);
        by_cell.entry(b).or_default().push(li);
    }
    let mut adj = vec![Vec::new(); n];
    let shared = |p: &[Point3], q: &[Point3]| p.iter().filter(|u| q.iter().any(|v| norm(&sub(u, v)) <= tol)).count();
    for members in by_cell.values() {
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                if adj[i].contains(&j) {
                    continue;
                }
                let (pi, pj) = (&tess.facets[crack.facet_ids[i]].polygon, &tess.facets[crack.facet_ids[j]].polygon);
                if shared(pi, pj) >= 2 {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    adj
}

/// Breadth-first facet order (local indices). The root is the facet whose
/// centroid is nearest the window center, ties to the lowest index; every
/// further component restarts the same way among unvisited facets.
pub fn traversal_order(tess: &Tessellation, crack: &CrackSurface) -> Vec<usize> {
    let adj = crack_adjacency(tess, crack);
    let center = tess.window.center();
    let dist: Vec<f64> = crack
        .facet_ids
        .iter()
        .map(|&f| norm(&sub(&tess.facets[f].centroid, &center)))
        .collect();
    let mut by_dist: Vec<usize> = (0..dist.len()).collect();
    by_dist.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let mut seen = vec![false; dist.len()];
    let mut order = Vec::with_capacity(dist.len());
    for &root in &by_dist {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut q = VecDeque::from([root]);
        while let Some(u) = q.pop_front() {
            order.push(u);
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
    }
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WidthWalkParams {
    /// Probability of each of the +1 and -1 steps.
    pub p: f64,
    pub w0: u32,
    pub w_min: u32,
    /// `None` leaves the walk unbounded above.
    pub w_max: Option<u32>,
}

impl Default for WidthWalkParams {
    fn default() -> Self {
        Self {
            p: 0.01,
            w0: 3,
            w_min: 1,
            w_max: Some(12),
        }
    }
}

impl WidthWalkParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.p) {
            return Err(Error::param("p", format!("must lie in [0, 0.5), got {}", self.p)));
        }
        if self.w_min < 1 {
            return Err(Error::param("w_min", "must be at least 1"));
        }
        if let Some(hi) = self.w_max {
            if hi < self.w_min {
                return Err(Error::param("w_max", "must be at least w_min"));
            }
        }
        if self.w0 < 1 {
            return Err(Error::param("w0", "must be at least 1"));
        }
        Ok(())
    }

    fn clamp(&self, w: i64) -> u32 {
        let hi = self.w_max.map_or(i64::MAX, |v| v as i64);
        w.clamp(self.w_min as i64, hi) as u32
    }
}

/// Bernoulli width walk of `n` values: the first is `w0` (clamped), each
/// further value steps +1 with probability `p`, -1 with probability `p`.
/// A step that would leave `[w_min, w_max]` is reflected.
pub fn width_walk(params: &WidthWalkParams, n: usize, stream: RandomStream) -> Result<Vec<u32>> {
    params.validate()?;
    let mut rng = stream.rng();
    let mut w = params.clamp(params.w0 as i64);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            let u: f64 = rng.random();
            let step = if u < params.p {
                1
            } else if u < 2.0 * params.p {
                -1
            } else {
                0
            };
            let next = params.clamp(w as i64 + step);
            // reflect at the bounds so that every drawn step changes the width
            w = if next == w && step != 0 { params.clamp(w as i64 - step) } else { next };
        }
        out.push(w);
    }
    Ok(out)
}

/// Assigns walk widths along the breadth-first facet order.
pub fn assign_widths_random_walk(
    tess: &Tessellation,
    crack: &CrackSurface,
    params: &WidthWalkParams,
    stream: RandomStream,
) -> Result<CrackSurface> {
    if crack.is_empty() {
        return Err(Error::Empty("crack"));
    }
    let order = traversal_order(tess, crack);
    let walk = width_walk(params, order.len(), stream)?;
    let mut out = crack.clone();
    for (&li, w) in order.iter().zip(walk) {
        out.widths[li] = w;
    }
    Ok(out)
}

/// Splits the crack into `regions` contiguous patches grown breadth-first
/// from random seed facets and gives each patch a width from `scales`
/// (cycling through a shuffled copy, so every scale is used when
/// `regions >= scales.len()`).
pub fn make_multiscale_widths(
    tess: &Tessellation,
    crack: &CrackSurface,
    scales: &[u32],
    regions: usize,
    stream: RandomStream,
) -> Result<CrackSurface> {
    if scales.is_empty() || scales.contains(&0) {
        return Err(Error::param("scales", format!("need non-empty widths >= 1, got {scales:?}")));
    }
    if crack.is_empty() {
        return Err(Error::Empty("crack"));
    }
    let mut rng = stream.rng();
    let n = crack.len();
    let regions = regions.clamp(1, n);
    let adj = crack_adjacency(tess, crack);
    let mut seeds: Vec<usize> = (0..n).collect();
    seeds.shuffle(&mut rng);
    seeds.truncate(regions);
    let mut palette = scales.to_vec();
    palette.shuffle(&mut rng);
    let mut label = vec![usize::MAX; n];
    let mut q = VecDeque::new();
    for (r, &s) in seeds.iter().enumerate() {
        label[s] = r;
        q.push_back(s);
    }
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if label[v] == usize::MAX {
                label[v] = label[u];
                q.push_back(v);
            }
        }
    }
    let mut out = crack.clone();
    for (i, l) in label.into_iter().enumerate() {
        // facets not reachable from any seed take the first scale
        let r = if l == usize::MAX { 0 } else { l };
        out.widths[i] = palette[r % palette.len()];
    }
    Ok(out)
}

/// Convex planar polygon prepared for distance queries.
struct PolyDist {
    verts: Vec<Point3>,
    normal: Point3,
    origin: Point3,
}

impl PolyDist {
    fn new(verts: Vec<Point3>, normal: Point3) -> Self {
        let origin = crate::tessellation::vertex_mean(&verts);
        Self { verts, normal, origin }
    }

    fn distance(&self, q: &Point3) -> f64 {
        let h = dot(&self.normal, &sub(q, &self.origin));
        let proj = [0, 1, 2].map(|k| q[k] - h * self.normal[k]);
        let n = self.verts.len();
        let mut inside = true;
        for i in 0..n {
            let a = &self.verts[i];
            let b = &self.verts[(i + 1) % n];
            if dot(&cross(&sub(b, a), &sub(&proj, a)), &self.normal) < 0.0 {
                inside = false;
                break;
            }
        }
        if inside {
            return h.abs();
        }
        (0..n)
            .map(|i| segment_distance(q, &self.verts[i], &self.verts[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(q: &Point3, a: &Point3, b: &Point3) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(&ab, &ab);
    let t = if len2 > 0.0 { (dot(&sub(q, a), &ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    norm(&sub(q, &[a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]]))
}

/// Checks that the tessellation window is the voxel box `[0, n]` per axis.
fn check_window(tess: &Tessellation, dims: Dims) -> Result<()> {
    let ext = tess.window.extent();
    let d = dims.as_array();
    if (0..3).any(|k| (ext[k] - d[k] as f64).abs() > 1e-9 * d[k] as f64) {
        return Err(Error::param(
            "dims",
            format!("tessellation window extent {ext:?} must equal the voxel dims {d:?}"),
        ));
    }
    Ok(())
}

/// Voxels whose center lies within `width / 2` of some cut facet.
///
/// The window is in voxel units, voxel `(i, j, k)` has its center at
/// `window.min + (i + ½, j + ½, k + ½)`. Work is split over z-slices.
pub fn voxelize_crack(crack: &CrackSurface, tess: &Tessellation, dims: Dims) -> Result<LabelMask> {
    dims.validate()?;
    check_window(tess, dims)?;
    let min_dim = dims.as_array().into_iter().min().unwrap();
    if let Some(&w) = crack.widths.iter().max() {
        if w as usize > min_dim / 2 {
            return Err(Error::param("widths", format!("width {w} exceeds half the smallest dimension {min_dim}")));
        }
    }
    if crack.widths.len() != crack.facet_ids.len() {
        return Err(Error::param("widths", "one width per facet required"));
    }
    let o = tess.window.min;
    struct Job {
        poly: PolyDist,
        r: f64,
        lo: [usize; 3],
        hi: [usize; 3],
    }
    let jobs: Vec<Job> = crack
        .facet_ids
        .iter()
        .zip(&crack.widths)
        .map(|(&f, &w)| {
            let facet = &tess.facets[f];
            let local: Vec<Point3> = facet.polygon.iter().map(|p| sub(p, &o)).collect();
            let r = w as f64 / 2.0;
            let mut lo = [usize::MAX; 3];
            let mut hi = [0usize; 3];
            for k in 0..3 {
                let mn = local.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min) - r;
                let mx = local.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max) + r;
                // centers c = i + 0.5 with mn <= c <= mx
                lo[k] = (mn - 0.5).ceil().max(0.0) as usize;
                hi[k] = ((mx - 0.5).floor().max(-1.0) + 1.0).min(dims.as_array()[k] as f64) as usize;
            }
            Job {
                poly: PolyDist::new(local, facet.normal),
                r,
                lo,
                hi,
            }
        })
        .collect();
    let mut mask = LabelMask::new(dims);
    let slice = dims.slice_len();
    mask.bits_mut().par_chunks_mut(slice).enumerate().for_each(|(z, plane)| {
        let zc = z as f64 + 0.5;
        for job in jobs.iter().filter(|j| j.lo[2] <= z && z < j.hi[2]) {
            let r = job.r + 1e-9;
            for y in job.lo[1]..job.hi[1] {
                for x in job.lo[0]..job.hi[0] {
                    let idx = x + dims.nx * y;
                    if !plane[idx] && job.poly.distance(&[x as f64 + 0.5, y as f64 + 0.5, zc]) <= r {
                        plane[idx] = true;
                    }
                }
            }
        }
    });
    Ok(mask)
}

/// Zero-mean fractional Brownian surface on an `nx × ny` grid with RMS
/// `rms`, by spectral synthesis: complex white noise filtered with
/// amplitude `|ξ|^(-H-1)` (power `|ξ|^(-2H-2)`), real part kept.
pub fn fbm_surface(hurst: f64, rms: f64, nx: usize, ny: usize, stream: RandomStream) -> Result<Vec<f64>> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::param("hurst", format!("must lie in (0, 1), got {hurst}")));
    }
    if !(rms >= 0.0 && rms.is_finite()) {
        return Err(Error::param("amplitude", "must be finite and non-negative"));
    }
    let dims = Dims::new(nx, ny, 1);
    let mut rng = stream.rng();
    let mut spec: Vec<Complex64> = (0..nx * ny)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    fft::fft_nd(&mut spec, dims, Direction::Forward);
    for y in 0..ny {
        let fy = fft::freq(y, ny) / ny as f64;
        for x in 0..nx {
            let fx = fft::freq(x, nx) / nx as f64;
            let k = (fx * fx + fy * fy).sqrt();
            let amp = if k == 0.0 { 0.0 } else { k.powf(-hurst - 1.0) };
            spec[x + nx * y] *= amp;
        }
    }
    fft::fft_nd(&mut spec, dims, Direction::Inverse);
    let mut h: Vec<f64> = spec.into_iter().map(|c| c.re).collect();
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    let var = h.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / h.len() as f64;
    let scale = if var > 0.0 { rms / var.sqrt() } else { 0.0 };
    for v in &mut h {
        *v = (*v - mean) * scale;
    }
    Ok(h)
}

/// One-voxel-thick, 6-separating crack on the height field
/// `z = nz/2 + f(x, y)`, `f` a fractional Brownian surface.
///
/// Each column is marked from its own rounded height up to one below the
/// highest rounded height of its four neighbors, which closes every
/// horizontal 6-step across the surface.
pub fn brownian_crack(hurst: f64, amplitude_vox: f64, dims: Dims, stream: RandomStream) -> Result<LabelMask> {
    if dims.nx < 8 || dims.ny < 8 || dims.nz < 8 {
        return Err(Error::TooSmall(format!("brownian crack needs at least 8^3 voxels, got {dims:?}")));
    }
    let h = fbm_surface(hurst, amplitude_vox, dims.nx, dims.ny, stream)?;
    let mid = dims.nz as f64 / 2.0;
    let top = dims.nz as i64 - 1;
    let level: Vec<i64> = h.iter().map(|v| ((mid + v).floor() as i64).clamp(0, top)).collect();
    let (nx, ny) = (dims.nx, dims.ny);
    let mut mask = LabelMask::new(dims);
    for y in 0..ny {
        for x in 0..nx {
            let r = level[x + nx * y];
            let mut hi = r;
            let nb = [
                (x > 0).then(|| x - 1 + nx * y),
                (x + 1 < nx).then(|| x + 1 + nx * y),
                (y > 0).then(|| x + nx * (y - 1)),
                (y + 1 < ny).then(|| x + nx * (y + 1)),
            ];
            for n in nb.into_iter().flatten() {
                hi = hi.max(level[n] - 1);
            }
            for z in r..=hi {
                mask.set(x, y, z as usize, true);
            }
        }
    }
    Ok(mask)
}

/// Widens a thin mask to total thickness `width` voxels.
pub fn widen(mask: &LabelMask, width: u32) -> Result<LabelMask> {
    if width < 1 {
        return Err(Error::param("width", "must be at least 1"));
    }
    Ok(edt::dilate(mask, (width as f64 - 1.0) / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::points::{PointPattern, Window};
    use crate::tessellation::build_voronoi;

    fn two_cells(n: f64) -> Tessellation {
        let w = Window::cube(n);
        let p = PointPattern {
            window: w,
            points: vec![[0.3 * n, 0.5 * n, 0.5 * n], [0.7 * n, 0.45 * n, 0.55 * n]],
        };
        build_voronoi(&p, w).unwrap()
    }

    #[test]
    fn two_cell_cut_is_the_bisector() {
        let t = two_cells(16.0);
        let c = min_cut_crack(&t, Axis::X).unwrap();
        assert_eq!(c.facet_ids, vec![0]);
        assert_eq!(c.cut_weight, t.facets[0].area);
    }

    #[test]
    fn cell_spanning_both_walls_has_no_finite_cut() {
        let t = two_cells(16.0);
        assert!(matches!(min_cut_crack(&t, Axis::Y), Err(Error::NoFiniteCut(_))));
    }

    #[test]
    fn walk_without_steps_is_constant() {
        let p = WidthWalkParams { p: 0.0, w0: 4, w_min: 1, w_max: None };
        assert!(width_walk(&p, 1000, RandomStream::new(1, 0)).unwrap().iter().all(|&w| w == 4));
    }

    #[test]
    fn walk_respects_clamps_and_validation() {
        let p = WidthWalkParams { p: 0.4, w0: 2, w_min: 1, w_max: Some(3) };
        let w = width_walk(&p, 10_000, RandomStream::new(1, 0)).unwrap();
        assert!(w.iter().all(|&v| (1..=3).contains(&v)));
        assert!(w.windows(2).all(|s| s[0].abs_diff(s[1]) <= 1));
        assert!(width_walk(&WidthWalkParams { p: 0.5, ..p }, 1, RandomStream::new(1, 0)).is_err());
        assert!(width_walk(&WidthWalkParams { w_max: Some(0), ..p }, 1, RandomStream::new(1, 0)).is_err());
    }

    #[test]
    fn empty_crack_voxelizes_empty() {
        let t = two_cells(16.0);
        let c = CrackSurface { axis: Axis::X, facet_ids: vec![], widths: vec![], cut_weight: 0.0 };
        assert!(voxelize_crack(&c, &t, Dims::cube(16)).unwrap().is_empty());
    }

    #[test]
    fn voxelization_rejects_bad_inputs() {
        let t = two_cells(16.0);
        let c = min_cut_crack(&t, Axis::X).unwrap();
        assert!(voxelize_crack(&c.clone().with_constant_width(9), &t, Dims::cube(16)).is_err());
        assert!(voxelize_crack(&c, &t, Dims::cube(17)).is_err());
    }

    #[test]
    fn axis_plane_width_three_is_three_thick() {
        let w = Window::cube(20.0);
        let p = PointPattern { window: w, points: vec![[5.0, 10.0, 10.0], [15.2, 10.0, 10.0]] };
        let t = build_voronoi(&p, w).unwrap();
        let c = min_cut_crack(&t, Axis::X).unwrap().with_constant_width(3);
        let m = voxelize_crack(&c, &t, Dims::cube(20)).unwrap();
        // bisector at x = 10.1: centers 9.5, 10.5, 11.5 within 1.5 (8.5 is 1.6 away)
        for x in 0..20 {
            assert_eq!(m.get(x, 3, 4), (9..=11).contains(&x), "x = {x}");
        }
        assert_eq!(m.count(), 3 * 400);
    }

    #[test]
    fn dilation_is_monotone_in_width() {
        let t = two_cells(24.0);
        let c = min_cut_crack(&t, Axis::X).unwrap();
        let thin = voxelize_crack(&c.clone().with_constant_width(2), &t, Dims::cube(24)).unwrap();
        let thick = voxelize_crack(&c.with_constant_width(5), &t, Dims::cube(24)).unwrap();
        assert!(thin.is_subset_of(&thick));
        assert!(thin.count() < thick.count());
    }

    #[test]
    fn flat_brownian_crack_is_mid_plane() {
        let m = brownian_crack(0.5, 0.0, Dims::cube(16), RandomStream::new(1, 0)).unwrap();
        assert_eq!(m.count(), 256);
        assert!((0..16).all(|x| m.get(x, x, 8)));
        assert!(brownian_crack(1.0, 2.0, Dims::cube(16), RandomStream::new(1, 0)).is_err());
        assert!(brownian_crack(0.5, 2.0, Dims::cube(7), RandomStream::new(1, 0)).is_err());
    }

    #[test]
    fn fbm_has_requested_rms() {
        let h = fbm_surface(0.7, 3.0, 64, 32, RandomStream::new(2, 0)).unwrap();
        let mean = h.iter().sum::<f64>() / h.len() as f64;
        let rms = (h.iter().map(|v| v * v).sum::<f64>() / h.len() as f64).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((rms - 3.0).abs() < 1e-9);
    }

    #[test]
    fn multiscale_single_scale_is_constant() {
        let w = Window::cube(30.0);
        let p = crate::points::sample_poisson(0.002, w, RandomStream::new(8, 0)).unwrap();
        let t = build_voronoi(&p, w).unwrap();
        let c = min_cut_crack(&t, Axis::Z).unwrap();
        let m = make_multiscale_widths(&t, &c, &[3], 4, RandomStream::new(1, 0)).unwrap();
        assert_eq!(m, c.clone().with_constant_width(3));
        assert!(make_multiscale_widths(&t, &c, &[], 4, RandomStream::new(1, 0)).is_err());
        assert!(make_multiscale_widths(&t, &c, &[0, 2], 4, RandomStream::new(1, 0)).is_err());
    }
}
