//! Germ processes: Poisson, Matérn cluster, force-biased packing.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dist::SizeDist;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

pub type Point3 = [f64; 3];

/// Closed axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub min: Point3,
    pub max: Point3,
}

impl Window {
    pub fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    /// `[0, n]` along every axis.
    pub fn cube(n: f64) -> Self {
        Self::new([0.0; 3], [n; 3])
    }

    pub fn from_extent(extent: [f64; 3]) -> Self {
        Self::new([0.0; 3], extent)
    }

    pub fn extent(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| self.max[k] - self.min[k])
    }

    pub fn volume(&self) -> f64 {
        self.extent().iter().product()
    }

    pub fn center(&self) -> Point3 {
        [0, 1, 2].map(|k| 0.5 * (self.min[k] + self.max[k]))
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn dilate(&self, r: f64) -> Self {
        Self::new(self.min.map(|v| v - r), self.max.map(|v| v + r))
    }

    pub fn validate(&self) -> Result<()> {
        if self.extent().iter().all(|e| e.is_finite() && *e > 0.0) {
            Ok(())
        } else {
            Err(Error::DegenerateWindow(format!("{self:?}")))
        }
    }

    fn uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point3 {
        [0, 1, 2].map(|k| self.min[k] + rng.random::<f64>() * (self.max[k] - self.min[k]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub window: Window,
    pub points: Vec<Point3>,
}

impl PointPattern {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let w = &self.window;
        let mut s = format!(
            "# window {} {} {} {} {} {}\nx,y,z\n",
            w.min[0], w.min[1], w.min[2], w.max[0], w.max[1], w.max[2]
        );
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p[0], p[1], p[2]);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as usize
}

fn check_nonneg(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and non-negative, got {v}")))
    }
}

/// Homogeneous Poisson process. The count comes from stream
/// `("count", 0)` and point `i` from stream `("point", i)`.
pub fn sample_poisson(intensity: f64, window: Window, stream: RandomStream) -> Result<PointPattern> {
    check_nonneg("intensity", intensity)?;
    window.validate()?;
    let n = poisson_count(intensity * window.volume(), &mut stream.substream("count", 0).rng());
    let points = (0..n)
        .map(|i| window.uniform(&mut stream.substream("point", i as u64).rng()))
        .collect();
    Ok(PointPattern { window, points })
}

/// Uniform point in the ball of radius `r` around `c`.
pub(crate) fn uniform_in_ball<R: Rng + ?Sized>(c: &Point3, r: f64, rng: &mut R) -> Point3 {
    let g: [f64; 3] = [0, 1, 2].map(|_| rng.sample::<f64, _>(StandardNormal));
    let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt().max(f64::MIN_POSITIVE);
    let rho = r * rng.random::<f64>().cbrt();
    [0, 1, 2].map(|k| c[k] + g[k] / norm * rho)
}

/// Matérn cluster realization with the parent of every retained point.
#[derive(Clone, Debug, PartialEq)]
pub struct MaternRealization {
    pub pattern: PointPattern,
    pub parents: Vec<Point3>,
    /// `parent_of[i]` indexes `parents` for `pattern.points[i]`.
    pub parent_of: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaternParams {
    pub parent_intensity: f64,
    pub mean_points_per_cluster: f64,
    pub cluster_radius: f64,
}

impl MaternParams {
    pub fn validate(&self) -> Result<()> {
        check_nonneg("parent_intensity", self.parent_intensity)?;
        check_nonneg("mean_points_per_cluster", self.mean_points_per_cluster)?;
        check_nonneg("cluster_radius", self.cluster_radius)
    }
}

pub fn sample_matern_cluster(params: MaternParams, window: Window, stream: RandomStream) -> Result<PointPattern> {
    sample_matern_cluster_with_parents(params, window, stream).map(|m| m.pattern)
}

/// Parents are simulated in the window dilated by the cluster radius so
/// that clusters centered just outside still contribute offspring.
pub fn sample_matern_cluster_with_parents(
    params: MaternParams,
    window: Window,
    stream: RandomStream,
) -> Result<MaternRealization> {
    params.validate()?;
    window.validate()?;
    let outer = window.dilate(params.cluster_radius);
    let parents_pattern = sample_poisson(params.parent_intensity, outer, stream.substream("parents", 0))?;
    let mut points = Vec::new();
    let mut parent_of = Vec::new();
    for (j, parent) in parents_pattern.points.iter().enumerate() {
        let mut rng = stream.substream("cluster", j as u64).rng();
        let n = poisson_count(params.mean_points_per_cluster, &mut rng);
        for _ in 0..n {
            let p = uniform_in_ball(parent, params.cluster_radius, &mut rng);
            if window.contains(&p) {
                points.push(p);
                parent_of.push(j);
            }
        }
    }
    Ok(MaternRealization {
        pattern: PointPattern { window, points },
        parents: parents_pattern.points,
        parent_of,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingParams {
    pub max_iters: usize,
    /// Tolerated overlap as a fraction of the smaller radius.
    pub overlap_tol: f64,
}

impl Default for PackingParams {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            overlap_tol: 1e-3,
        }
    }
}

/// Packed sphere centers with their radii.
#[derive(Clone, Debug, PartialEq)]
pub struct Packing {
    pub pattern: PointPattern,
    pub radii: Vec<f64>,
    pub iterations: usize,
}

pub const MAX_PACKING_FRACTION: f64 = 0.6;

/// Force-biased packing of `target_count` spheres with centers in `window`.
///
/// Spheres start at uniform positions with radii inflated by an outer
/// scale. Every sweep pushes overlapping pairs apart along their center
/// line by half the overlap depth each (Jacobi update, so the result does
/// not depend on pair order) and shrinks the outer scale toward 1. The
/// run ends once no pair overlaps at the true radii by more than
/// `overlap_tol` times the smaller radius.
pub fn sample_force_biased_packing(
    target_count: usize,
    radius: SizeDist,
    window: Window,
    stream: RandomStream,
    params: PackingParams,
) -> Result<PointPattern> {
    force_biased_packing(target_count, radius, window, stream, params).map(|p| p.pattern)
}

pub fn force_biased_packing(
    target_count: usize,
    radius: SizeDist,
    window: Window,
    stream: RandomStream,
    params: PackingParams,
) -> Result<Packing> {
    window.validate()?;
    radius.validate("radius_distribution")?;
    if !(params.overlap_tol >= 0.0) {
        return Err(Error::param("overlap_tol", "must be non-negative"));
    }
    let mut centers: Vec<Point3> = Vec::with_capacity(target_count);
    let mut radii = Vec::with_capacity(target_count);
    for i in 0..target_count {
        let mut rng = stream.substream("sphere", i as u64).rng();
        centers.push(window.uniform(&mut rng));
        radii.push(radius.sample(&mut rng));
    }
    let fraction: f64 = radii.iter().map(|r| 4.0 / 3.0 * std::f64::consts::PI * r.powi(3)).sum::<f64>() / window.volume();
    if fraction > MAX_PACKING_FRACTION {
        return Err(Error::param(
            "target_count",
            format!("packing fraction {fraction:.3} exceeds {MAX_PACKING_FRACTION}"),
        ));
    }
    let r_max = radii.iter().cloned().fold(0.0, f64::max);
    let n = centers.len();
    let mut outer = 1.1;
    let mut disp = vec![[0.0f64; 3]; n];
    for iter in 0..params.max_iters {
        let grid = CellGrid::new(&window, 2.0 * r_max * outer, &centers);
        let mut worst = 0.0f64;
        disp.iter_mut().for_each(|d| *d = [0.0; 3]);
        for i in 0..n {
            grid.for_neighbors(&centers[i], |j| {
                if j <= i {
                    return;
                }
                let d = sub(&centers[j], &centers[i]);
                let dist = norm(&d);
                let contact = radii[i] + radii[j];
                let true_overlap = (contact - dist) / radii[i].min(radii[j]);
                worst = worst.max(true_overlap);
                let overlap = outer * contact - dist;
                if overlap > 0.0 {
                    let dir = if dist > 1e-12 {
                        d.map(|v| v / dist)
                    } else {
                        // coincident centers: separate along a fixed axis
                        [1.0, 0.0, 0.0]
                    };
                    for k in 0..3 {
                        disp[i][k] -= 0.5 * overlap * dir[k];
                        disp[j][k] += 0.5 * overlap * dir[k];
                    }
                }
            });
        }
        if worst <= params.overlap_tol {
            return Ok(Packing {
                pattern: PointPattern { window, points: centers },
                radii,
                iterations: iter,
            });
        }
        for (c, d) in centers.iter_mut().zip(&disp) {
            for k in 0..3 {
                c[k] = (c[k] + d[k]).clamp(window.min[k], window.max[k]);
            }
        }
        outer = 1.0 + (outer - 1.0) * 0.995;
    }
    let worst = max_overlap(&centers, &radii);
    if worst <= params.overlap_tol {
        return Ok(Packing {
            pattern: PointPattern { window, points: centers },
            radii,
            iterations: params.max_iters,
        });
    }
    Err(Error::PackingNotConverged {
        iterations: params.max_iters,
        max_overlap: worst,
    })
}

fn max_overlap(centers: &[Point3], radii: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let dist = norm(&sub(&centers[j], &centers[i]));
            worst = worst.max((radii[i] + radii[j] - dist) / radii[i].min(radii[j]));
        }
    }
    worst
}

#[inline]
fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn norm(a: &Point3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Uniform bucket grid over a window.
pub(crate) struct CellGrid {
    origin: Point3,
    /// Actual bucket edge per axis; never below the requested size.
    size: [f64; 3],
    shape: [usize; 3],
    start: Vec<usize>,
    items: Vec<usize>,
}

impl CellGrid {
    pub(crate) fn new(window: &Window, cell: f64, points: &[Point3]) -> Self {
        let ext = window.extent();
        let cell = cell.max(1e-9);
        let shape = ext.map(|e| ((e / cell).floor() as usize).clamp(1, 256));
        let size = [0, 1, 2].map(|k| ext[k] / shape[k] as f64);
        let mut grid = Self {
            origin: window.min,
            size,
            shape,
            start: vec![0; shape[0] * shape[1] * shape[2] + 1],
            items: vec![0; points.len()],
        };
        let keys: Vec<usize> = points.iter().map(|p| grid.key(grid.cell_of(p))).collect();
        for &k in &keys {
            grid.start[k + 1] += 1;
        }
        for i in 1..grid.start.len() {
            grid.start[i] += grid.start[i - 1];
        }
        let mut fill = grid.start.clone();
        for (i, &k) in keys.iter().enumerate() {
            grid.items[fill[k]] = i;
            fill[k] += 1;
        }
        grid
    }

    pub(crate) fn cell_of(&self, p: &Point3) -> [usize; 3] {
        [0, 1, 2].map(|k| (((p[k] - self.origin[k]) / self.size[k]).floor().max(0.0) as usize).min(self.shape[k] - 1))
    }

    fn key(&self, c: [usize; 3]) -> usize {
        c[0] + self.shape[0] * (c[1] + self.shape[1] * c[2])
    }

    pub(crate) fn shape(&self) -> [usize; 3] {
        self.shape
    }

    /// Smallest bucket edge.
    pub(crate) fn min_size(&self) -> f64 {
        self.size.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn bucket(&self, c: [usize; 3]) -> &[usize] {
        let k = self.key(c);
        &self.items[self.start[k]..self.start[k + 1]]
    }

    /// Visits points in the 27 buckets around `p`; covers every point
    /// within the requested cell size of `p`.
    pub(crate) fn for_neighbors(&self, p: &Point3, mut f: impl FnMut(usize)) {
        self.for_ring(self.cell_of(p), 0, &mut f);
        self.for_ring(self.cell_of(p), 1, &mut f);
    }

    /// Visits the buckets at Chebyshev distance exactly `k` from `c`.
    pub(crate) fn for_ring(&self, c: [usize; 3], k: usize, f: &mut impl FnMut(usize)) {
        let k = k as isize;
        let lo = |a: usize| (c[a] as isize - k).max(0) as usize;
        let hi = |a: usize| ((c[a] as isize + k) as usize).min(self.shape[a] - 1);
        for z in lo(2)..=hi(2) {
            for y in lo(1)..=hi(1) {
                for x in lo(0)..=hi(0) {
                    let d = [x, y, z]
                        .iter()
                        .zip(&c)
                        .map(|(&a, &b)| (a as isize - b as isize).abs())
                        .max()
                        .unwrap();
                    if d == k {
                        for &i in self.bucket([x, y, z]) {
                            f(i);
                        }
                    }
                }
            }
        }
    }
}

/// Scales coordinates (and the window) per axis.
pub fn stretch_points(pattern: &PointPattern, scale: [f64; 3]) -> Result<PointPattern> {
    if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::param("scale", format!("must be positive per axis, got {scale:?}")));
    }
    let s = |p: &Point3| [0, 1, 2].map(|k| p[k] * scale[k]);
    Ok(PointPattern {
        window: Window::new(s(&pattern.window.min), s(&pattern.window.max)),
        points: pattern.points.iter().map(s).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_intensity_is_empty() {
        let p = sample_poisson(0.0, Window::cube(1.0), RandomStream::new(1, 0)).unwrap();
        assert!(p.is_empty());
        let m = MaternParams {
            parent_intensity: 0.0,
            mean_points_per_cluster: 5.0,
            cluster_radius: 0.1,
        };
        assert!(sample_matern_cluster(m, Window::cube(1.0), RandomStream::new(1, 0)).unwrap().is_empty());
    }

    #[test]
    fn negative_parameters_rejected() {
        assert!(sample_poisson(-1.0, Window::cube(1.0), RandomStream::new(1, 0)).is_err());
        let m = MaternParams {
            parent_intensity: 1.0,
            mean_points_per_cluster: -5.0,
            cluster_radius: 0.1,
        };
        assert!(sample_matern_cluster(m, Window::cube(1.0), RandomStream::new(1, 0)).is_err());
        assert!(sample_poisson(1.0, Window::new([0.0; 3], [1.0, 0.0, 1.0]), RandomStream::new(1, 0)).is_err());
    }

    #[test]
    fn points_lie_in_window_and_are_deterministic() {
        let w = Window::new([1.0, 2.0, 3.0], [2.0, 4.0, 3.5]);
        let a = sample_poisson(300.0, w, RandomStream::new(5, 2)).unwrap();
        assert!(a.points.iter().all(|p| w.contains(p)));
        assert_eq!(a, sample_poisson(300.0, w, RandomStream::new(5, 2)).unwrap());
        assert_ne!(a, sample_poisson(300.0, w, RandomStream::new(5, 3)).unwrap());
    }

    #[test]
    fn matern_offspring_near_parents() {
        let m = MaternParams {
            parent_intensity: 20.0,
            mean_points_per_cluster: 10.0,
            cluster_radius: 0.08,
        };
        let r = sample_matern_cluster_with_parents(m, Window::cube(1.0), RandomStream::new(3, 0)).unwrap();
        assert!(!r.pattern.is_empty());
        for (p, &j) in r.pattern.points.iter().zip(&r.parent_of) {
            assert!(norm(&sub(p, &r.parents[j])) <= m.cluster_radius + 1e-12);
            assert!(r.pattern.window.contains(p));
        }
    }

    #[test]
    fn packing_single_and_dense_rejected() {
        let one = sample_force_biased_packing(1, SizeDist::constant(0.1), Window::cube(1.0), RandomStream::new(1, 0), PackingParams::default()).unwrap();
        assert_eq!(one.len(), 1);
        assert!(one.window.contains(&one.points[0]));
        let err = sample_force_biased_packing(200, SizeDist::constant(0.1), Window::cube(1.0), RandomStream::new(1, 0), PackingParams::default());
        assert!(err.is_err());
    }

    #[test]
    fn packing_reports_non_convergence() {
        let r = (0.3 * 3.0 / (4.0 * std::f64::consts::PI * 200.0)).cbrt();
        let e = sample_force_biased_packing(
            200,
            SizeDist::constant(r),
            Window::cube(1.0),
            RandomStream::new(1, 0),
            PackingParams { max_iters: 1, overlap_tol: 1e-3 },
        );
        assert!(matches!(e, Err(Error::PackingNotConverged { .. })));
    }

    #[test]
    fn stretch_identity_and_errors() {
        let p = sample_poisson(50.0, Window::cube(1.0), RandomStream::new(2, 0)).unwrap();
        assert_eq!(stretch_points(&p, [1.0; 3]).unwrap(), p);
        assert!(stretch_points(&p, [1.0, 0.0, 1.0]).is_err());
        let s = stretch_points(&p, [2.0, 1.0, 3.0]).unwrap();
        assert_eq!(s.window.max, [2.0, 1.0, 3.0]);
    }

    #[test]
    fn csv_has_window_header() {
        let p = PointPattern {
            window: Window::cube(2.0),
            points: vec![[0.5, 1.0, 1.5]],
        };
        let csv = p.to_csv();
        assert!(csv.starts_with("# window 0 0 0 2 2 2\nx,y,z\n"));
        assert!(csv.contains("0.5,1,1.5"));
    }
}
