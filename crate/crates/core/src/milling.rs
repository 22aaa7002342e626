//! Procedural face-milling height maps built from ring imprints.
//!
//! Lengths are in micrometres unless a field name says otherwise. Grid
//! cell `(i, j)` has its center at `((i + ½) h, (j + ½) h)` for resolution
//! `h`; the surface spans `[0, w] x [0, h]`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{fft_nd, Direction};
use crate::grid::{Dims, VoxelVolume};
use crate::rng::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolPath {
    Parallel,
    Spiral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MillingConfig {
    pub head_diameter_mm: f64,
    /// Head tilt about the feed direction.
    pub tilt_deg: f64,
    pub blade_width_um: f64,
    pub feed_rate_mm_per_min: f64,
    pub spindle_speed_rpm: f64,
    /// Row spacing `a_e` of the tool path.
    pub lateral_cutting_depth_mm: f64,
    pub path: ToolPath,
    pub surface_size_mm: [f64; 2],
    pub grid_resolution_um: f64,
    /// Mean groove depth.
    pub depth_scale_um: f64,
    /// Log-space standard deviation of the per-ring depth factor (mean 1).
    pub depth_jitter: f64,
    /// Standard deviation of the per-ring radius.
    pub radius_jitter_um: f64,
    pub max_cut_depth_um: f64,
}

impl Default for MillingConfig {
    fn default() -> Self {
        MillingConfig {
            head_diameter_mm: 8.0,
            tilt_deg: 0.03,
            blade_width_um: 200.0,
            feed_rate_mm_per_min: 300.0,
            spindle_speed_rpm: 6000.0,
            lateral_cutting_depth_mm: 2.0,
            path: ToolPath::Parallel,
            surface_size_mm: [10.24, 10.24],
            grid_resolution_um: 10.0,
            depth_scale_um: 2.0,
            depth_jitter: 0.1,
            radius_jitter_um: 2.0,
            max_cut_depth_um: 50.0,
        }
    }
}

impl MillingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("head_diameter_mm", self.head_diameter_mm),
            ("blade_width_um", self.blade_width_um),
            ("feed_rate_mm_per_min", self.feed_rate_mm_per_min),
            ("spindle_speed_rpm", self.spindle_speed_rpm),
            ("lateral_cutting_depth_mm", self.lateral_cutting_depth_mm),
            ("surface_size_mm[0]", self.surface_size_mm[0]),
            ("surface_size_mm[1]", self.surface_size_mm[1]),
            ("grid_resolution_um", self.grid_resolution_um),
            ("depth_scale_um", self.depth_scale_um),
            ("max_cut_depth_um", self.max_cut_depth_um),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("tilt_deg", self.tilt_deg), ("depth_jitter", self.depth_jitter), ("radius_jitter_um", self.radius_jitter_um)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be non-negative and finite, got {v}")));
            }
        }
        if self.tilt_deg >= 90.0 {
            return Err(Error::param("tilt_deg", "must be below 90"));
        }
        if self.grid_resolution_um > self.blade_width_um / 2.0 {
            return Err(Error::param("grid_resolution_um", "must not exceed half the blade width"));
        }
        Ok(())
    }

    /// Feed per revolution in µm: the spacing of successive rings.
    pub fn feed_per_rev_um(&self) -> f64 {
        self.feed_rate_mm_per_min / self.spindle_speed_rpm * 1000.0
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        let n = |mm: f64| ((mm * 1000.0 / self.grid_resolution_um).round() as usize).max(1);
        (n(self.surface_size_mm[0]), n(self.surface_size_mm[1]))
    }

    /// Rows spaced wider than the head leave uncut stripes.
    pub fn leaves_gaps(&self) -> bool {
        self.lateral_cutting_depth_mm > self.head_diameter_mm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    /// Position along the path; keys the ring's jitter stream.
    pub index: usize,
    pub center: [f64; 2],
    /// Unit feed direction.
    pub direction: [f64; 2],
}

/// Head-center positions spaced by the feed per revolution.
pub fn generate_tool_path(cfg: &MillingConfig) -> Result<Vec<PathPoint>> {
    cfg.validate()?;
    let step = cfg.feed_per_rev_um();
    let ae = cfg.lateral_cutting_depth_mm * 1000.0;
    let r = cfg.head_diameter_mm * 500.0;
    let (w, h) = (cfg.surface_size_mm[0] * 1000.0, cfg.surface_size_mm[1] * 1000.0);
    let mut pts = Vec::new();
    match cfg.path {
        ToolPath::Parallel => {
            let rows = (h / ae).ceil() as usize;
            let n = ((w + 2.0 * r) / step).floor() as usize + 1;
            for k in 0..rows {
                let y = (k as f64 + 0.5) * ae;
                let forward = k % 2 == 0;
                for s in 0..n {
                    let x = if forward { -r + s as f64 * step } else { w + r - s as f64 * step };
                    let direction = if forward { [1.0, 0.0] } else { [-1.0, 0.0] };
                    pts.push(PathPoint { index: pts.len(), center: [x, y], direction });
                }
            }
        }
        ToolPath::Spiral => {
            // r(φ) = r0 - b φ, stepped by arc length
            let (cx, cy) = (w / 2.0, h / 2.0);
            let r0 = (w / 2.0).hypot(h / 2.0) + r;
            let b = ae / (2.0 * PI);
            let mut phi = 0.0f64;
            loop {
                let rho = r0 - b * phi;
                if rho <= 0.0 {
                    break;
                }
                let (s, c) = phi.sin_cos();
                // d/dφ of (ρ cos φ, ρ sin φ)
                let t = [-b * c - rho * s, -b * s + rho * c];
                let tn = t[0].hypot(t[1]);
                pts.push(PathPoint {
                    index: pts.len(),
                    center: [cx + rho * c, cy + rho * s],
                    direction: [t[0] / tn, t[1] / tn],
                });
                phi += step / tn;
            }
        }
    }
    Ok(pts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeightMap {
    pub nx: usize,
    pub ny: usize,
    pub spacing_um: f64,
    /// µm; 0 is the uncut plane, negative is removed material.
    pub heights: Vec<f32>,
}

impl HeightMap {
    pub fn flat(nx: usize, ny: usize, spacing_um: f64) -> Self {
        HeightMap { nx, ny, spacing_um, heights: vec![0.0; nx * ny] }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.heights[x + self.nx * y]
    }

    pub fn to_volume(&self) -> VoxelVolume {
        VoxelVolume::from_fn(Dims::new(self.nx, self.ny, 1), |x, y, _| self.get(x, y))
            .with_spacing([self.spacing_um, self.spacing_um, 1.0])
    }
}

#[derive(Clone, Copy, Debug)]
struct Ring {
    center: [f64; 2],
    direction: [f64; 2],
    radius: f64,
    depth: f64,
}

fn ring_params(p: &PathPoint, cfg: &MillingConfig, stream: RandomStream) -> Ring {
    let mut rng = stream.substream("ring", p.index as u64).rng();
    let factor = if cfg.depth_jitter > 0.0 {
        let s = cfg.depth_jitter;
        LogNormal::new(-s * s / 2.0, s).expect("valid lognormal").sample(&mut rng)
    } else {
        1.0
    };
    let radius = cfg.head_diameter_mm * 500.0 + cfg.radius_jitter_um * rng.sample::<f64, _>(StandardNormal);
    Ring {
        center: p.center,
        direction: p.direction,
        radius: radius.max(cfg.blade_width_um),
        depth: cfg.depth_scale_um * factor,
    }
}

/// Imprints one ring per path point and combines them by pointwise
/// minimum. Ring jitter is keyed by `PathPoint::index`, so the result does
/// not depend on the order of `path`.
pub fn imprint_rings(path: &[PathPoint], cfg: &MillingConfig, stream: RandomStream) -> Result<HeightMap> {
    cfg.validate()?;
    let (nx, ny) = cfg.grid_shape();
    let res = cfg.grid_resolution_um;
    let mut hm = HeightMap::flat(nx, ny, res);
    let rings: Vec<Ring> = path.iter().map(|p| ring_params(p, cfg, stream)).collect();
    let half = cfg.blade_width_um / 2.0;
    let tilt_gain = cfg.tilt_deg.to_radians().tan() * cfg.head_diameter_mm * 500.0 / cfg.depth_scale_um;
    let floor = -cfg.max_cut_depth_um;
    hm.heights.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        let y = (j as f64 + 0.5) * res;
        let mut best = vec![0.0f64; nx];
        for ring in &rings {
            let dy = y - ring.center[1];
            if dy.abs() > ring.radius + half {
                continue;
            }
            // groove arc of chord `blade_width` and depth `ring.depth`
            let rho = (half * half + ring.depth * ring.depth) / (2.0 * ring.depth);
            let outer = ((ring.radius + half).powi(2) - dy * dy).max(0.0).sqrt();
            let inner2 = (ring.radius - half).powi(2) - dy * dy;
            let inner = if inner2 > 0.0 { inner2.sqrt() } else { 0.0 };
            for (lo, hi) in [(-outer, -inner), (inner, outer)] {
                let i0 = (((ring.center[0] + lo) / res - 0.5).ceil().max(0.0)) as usize;
                let i1 = ((ring.center[0] + hi) / res - 0.5).floor();
                if i1 < 0.0 {
                    continue;
                }
                for i in i0..=(i1 as usize).min(nx - 1) {
                    let dx = (i as f64 + 0.5) * res - ring.center[0];
                    let dist = dx.hypot(dy);
                    let u = dist - ring.radius;
                    if u.abs() > half || dist == 0.0 {
                        continue;
                    }
                    let profile = ring.depth - (rho - (rho * rho - u * u).max(0.0).sqrt());
                    let cos_t = (dx * ring.direction[0] + dy * ring.direction[1]) / dist;
                    let m = (1.0 + tilt_gain * cos_t).max(0.0);
                    let h = -(profile.max(0.0) * m);
                    if h < best[i] {
                        best[i] = h;
                    }
                }
            }
            // the two x intervals coincide at the ring's top and bottom
        }
        for (c, b) in row.iter_mut().zip(best) {
            *c = b.max(floor) as f32;
        }
    });
    Ok(hm)
}

pub fn generate_height_map(cfg: &MillingConfig, stream: RandomStream) -> Result<HeightMap> {
    imprint_rings(&generate_tool_path(cfg)?, cfg, stream)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreviewParams {
    /// Multiplies heights before normals are taken.
    pub vertical_exaggeration: f64,
    pub gain: f64,
    pub gamma: f64,
}

impl Default for PreviewParams {
    fn default() -> Self {
        PreviewParams { vertical_exaggeration: 1.0, gain: 1.0, gamma: 1.0 }
    }
}

/// Lambertian shading `max(0, n·l)` followed by `(gain * b)^gamma`,
/// clamped to `[0, 1]`. Normals use central differences, one-sided at
/// the border.
pub fn shade_preview(hm: &HeightMap, light: [f64; 3], view: PreviewParams) -> Result<Vec<f32>> {
    let n = light.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !((n - 1.0).abs() < 1e-6) {
        return Err(Error::param("light_direction", format!("must be a unit vector, |l| = {n}")));
    }
    if !(view.gain > 0.0 && view.gamma > 0.0 && view.vertical_exaggeration.is_finite()) {
        return Err(Error::param("preview", "gain and gamma must be positive"));
    }
    let (nx, ny) = (hm.nx, hm.ny);
    let h = |x: usize, y: usize| hm.get(x, y) as f64 * view.vertical_exaggeration;
    let deriv = |i: usize, n: usize, f: &dyn Fn(usize) -> f64| -> f64 {
        if n == 1 {
            0.0
        } else if i == 0 {
            (f(1) - f(0)) / hm.spacing_um
        } else if i == n - 1 {
            (f(n - 1) - f(n - 2)) / hm.spacing_um
        } else {
            (f(i + 1) - f(i - 1)) / (2.0 * hm.spacing_um)
        }
    };
    let mut out = vec![0.0f32; nx * ny];
    out.par_chunks_mut(nx).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let gx = deriv(x, nx, &|i| h(i, y));
            let gy = deriv(y, ny, &|j| h(x, j));
            let norm = (gx * gx + gy * gy + 1.0).sqrt();
            let b = ((-gx * light[0] - gy * light[1] + light[2]) / norm).max(0.0);
            *o = (view.gain * b).powf(view.gamma).clamp(0.0, 1.0) as f32;
        }
    });
    Ok(out)
}

/// Stops of the height colormap, deepest cut first (dark blue through
/// teal and yellow to white at the uncut plane).
pub const COLORMAP: [[u8; 3]; 5] = [[20, 24, 82], [30, 110, 160], [60, 170, 120], [240, 220, 80], [255, 255, 255]];

/// Linear interpolation through `COLORMAP`, `t = 0` deepest, `1` uncut.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (COLORMAP.len() - 1) as f64;
    let i = (t.floor() as usize).min(COLORMAP.len() - 2);
    let f = t - i as f64;
    [0, 1, 2].map(|k| (COLORMAP[i][k] as f64 * (1.0 - f) + COLORMAP[i + 1][k] as f64 * f).round() as u8)
}

/// Color-coded height map scaled from the deepest cell to 0.
pub fn color_code(hm: &HeightMap) -> Vec<[u8; 3]> {
    let lo = hm.heights.iter().cloned().fold(0.0f32, f32::min) as f64;
    hm.heights
        .iter()
        .map(|&v| colormap(if lo < 0.0 { 1.0 - v as f64 / lo } else { 1.0 }))
        .collect()
}

/// Normalized autocorrelation of the mean-free map (zero-padded, so no
/// wrap-around), stored with zero lag at the center of a
/// `(2nx-1) x (2ny-1)` grid.
pub fn autocorrelation(hm: &HeightMap) -> (Vec<f64>, usize, usize) {
    let (nx, ny) = (hm.nx, hm.ny);
    let (px, py) = ((2 * nx).next_power_of_two(), (2 * ny).next_power_of_two());
    let mean = hm.heights.iter().map(|&v| v as f64).sum::<f64>() / hm.heights.len() as f64;
    let mut buf = vec![Complex64::default(); px * py];
    for y in 0..ny {
        for x in 0..nx {
            buf[x + px * y] = Complex64::new(hm.get(x, y) as f64 - mean, 0.0);
        }
    }
    let dims = Dims::new(px, py, 1);
    fft_nd(&mut buf, dims, Direction::Forward);
    buf.par_iter_mut().for_each(|c| *c = Complex64::new(c.norm_sqr(), 0.0));
    fft_nd(&mut buf, dims, Direction::Inverse);
    let zero = buf[0].re;
    let (ox, oy) = (2 * nx - 1, 2 * ny - 1);
    let mut acf = vec![0.0; ox * oy];
    for j in 0..oy {
        let ly = j as isize - (ny as isize - 1);
        let sy = ly.rem_euclid(py as isize) as usize;
        for i in 0..ox {
            let lx = i as isize - (nx as isize - 1);
            let sx = lx.rem_euclid(px as isize) as usize;
            acf[i + ox * j] = if zero > 0.0 { buf[sx + px * sy].re / zero } else { 0.0 };
        }
    }
    (acf, ox, oy)
}

/// `sqrt(λmax / λmin)` of the second-moment tensor of the central
/// autocorrelation lobe: lags connected to zero lag where the normalized
/// autocorrelation is at least `level`, weighted by its value.
pub fn autocorrelation_eccentricity(hm: &HeightMap, level: f64) -> f64 {
    let (acf, ox, oy) = autocorrelation(hm);
    let (cx, cy) = (hm.nx - 1, hm.ny - 1);
    let mut seen = vec![false; ox * oy];
    let mut stack = vec![(cx, cy)];
    seen[cx + ox * cy] = true;
    let (mut sxx, mut syy, mut sxy, mut sw) = (0.0, 0.0, 0.0, 0.0);
    while let Some((x, y)) = stack.pop() {
        let w = acf[x + ox * y];
        let (dx, dy) = (x as f64 - cx as f64, y as f64 - cy as f64);
        sxx += w * dx * dx;
        syy += w * dy * dy;
        sxy += w * dx * dy;
        sw += w;
        for (nx_, ny_) in [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)] {
            if nx_ < ox && ny_ < oy && !seen[nx_ + ox * ny_] && acf[nx_ + ox * ny_] >= level {
                seen[nx_ + ox * ny_] = true;
                stack.push((nx_, ny_));
            }
        }
    }
    let (a, b, c) = (sxx / sw, syy / sw, sxy / sw);
    let tr = a + b;
    let disc = ((a - b).powi(2) / 4.0 + c * c).sqrt();
    let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
    if l2 <= 0.0 {
        f64::INFINITY
    } else {
        (l1 / l2).sqrt()
    }
}

/// Dominant period (grid cells) of the row profile `y` via the largest
/// non-DC power-spectrum bin.
pub fn dominant_period(profile: &[f32]) -> f64 {
    let n = profile.len();
    let mean = profile.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = profile.iter().map(|&v| Complex64::new(v as f64 - mean, 0.0)).collect();
    fft_nd(&mut buf, Dims::new(n, 1, 1), Direction::Forward);
    let k = (1..=n / 2)
        .max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))
        .unwrap_or(1);
    n as f64 / k as f64
}
