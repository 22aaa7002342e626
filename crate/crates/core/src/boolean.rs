//! Boolean and Cox-Boolean grain models.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::SizeDist;
use crate::error::{Error, Result};
use crate::grid::{Dims, LabelMask};
use crate::points::{sample_matern_cluster, sample_poisson, MaternParams, Point3, Window};
use crate::rng::RandomStream;

pub type Rotation = [[f64; 3]; 3];

pub const IDENTITY: Rotation = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GrainShapeSpec {
    Sphere { radius: SizeDist },
    /// Axis along the local z direction.
    Cylinder { radius: SizeDist, height: SizeDist },
    Cube { edge: SizeDist },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Orientation {
    Isotropic,
    /// Local z axis mapped onto `axis`.
    Fixed { axis: [f64; 3] },
}

impl Default for Orientation {
    fn default() -> Self {
        Orientation::Fixed { axis: [0.0, 0.0, 1.0] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrainSpec {
    pub shape: GrainShapeSpec,
    #[serde(default)]
    pub orientation: Orientation,
}

impl GrainSpec {
    pub fn spheres(radius: SizeDist) -> Self {
        GrainSpec {
            shape: GrainShapeSpec::Sphere { radius },
            orientation: Orientation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.shape {
            GrainShapeSpec::Sphere { radius } => radius.validate("radius")?,
            GrainShapeSpec::Cylinder { radius, height } => {
                radius.validate("radius")?;
                height.validate("height")?;
            }
            GrainShapeSpec::Cube { edge } => edge.validate("edge")?,
        }
        if let Orientation::Fixed { axis } = self.orientation {
            let n = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::param("orientation.axis", "must be a non-zero finite vector"));
            }
        }
        Ok(())
    }

    /// Largest circumradius any grain can have.
    pub fn max_circumradius(&self) -> f64 {
        match self.shape {
            GrainShapeSpec::Sphere { radius } => radius.sup(),
            GrainShapeSpec::Cylinder { radius, height } => radius.sup().hypot(height.sup() / 2.0),
            GrainShapeSpec::Cube { edge } => edge.sup() * 3f64.sqrt() / 2.0,
        }
    }

    /// `E[grain volume]`.
    pub fn mean_volume(&self) -> f64 {
        match self.shape {
            GrainShapeSpec::Sphere { radius } => 4.0 / 3.0 * PI * radius.raw_moment(3),
            GrainShapeSpec::Cylinder { radius, height } => PI * radius.raw_moment(2) * height.mean(),
            GrainShapeSpec::Cube { edge } => edge.raw_moment(3),
        }
    }

    /// Expected covered fraction `1 - exp(-λ E[V])`.
    pub fn coverage(&self, intensity: f64) -> f64 {
        1.0 - (-intensity * self.mean_volume()).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GrainShape {
    Sphere { radius: f64 },
    Cylinder { radius: f64, height: f64 },
    Cube { edge: f64 },
}

impl GrainShape {
    pub fn circumradius(&self) -> f64 {
        match *self {
            GrainShape::Sphere { radius } => radius,
            GrainShape::Cylinder { radius, height } => radius.hypot(height / 2.0),
            GrainShape::Cube { edge } => edge * 3f64.sqrt() / 2.0,
        }
    }

    pub fn volume(&self) -> f64 {
        match *self {
            GrainShape::Sphere { radius } => 4.0 / 3.0 * PI * radius.powi(3),
            GrainShape::Cylinder { radius, height } => PI * radius * radius * height,
            GrainShape::Cube { edge } => edge.powi(3),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grain {
    pub center: Point3,
    pub shape: GrainShape,
    /// Local-to-world rotation (columns are the local axes).
    pub rotation: Rotation,
}

impl Grain {
    pub fn contains(&self, p: &Point3) -> bool {
        let d = [0, 1, 2].map(|k| p[k] - self.center[k]);
        match self.shape {
            GrainShape::Sphere { radius } => d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= radius * radius,
            _ => {
                // R^T d
                let l = [0, 1, 2].map(|c| (0..3).map(|r| self.rotation[r][c] * d[r]).sum::<f64>());
                match self.shape {
                    GrainShape::Cylinder { radius, height } => {
                        l[0] * l[0] + l[1] * l[1] <= radius * radius && l[2].abs() <= height / 2.0
                    }
                    GrainShape::Cube { edge } => l.iter().all(|v| v.abs() <= edge / 2.0),
                    GrainShape::Sphere { .. } => unreachable!(),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrainList {
    pub window: Window,
    pub grains: Vec<Grain>,
}

impl GrainList {
    pub fn len(&self) -> usize {
        self.grains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grains.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("shape,x,y,z,radius,height,edge,r00,r01,r02,r10,r11,r12,r20,r21,r22\n");
        for g in &self.grains {
            let (name, r, h, e) = match g.shape {
                GrainShape::Sphere { radius } => ("sphere", radius, f64::NAN, f64::NAN),
                GrainShape::Cylinder { radius, height } => ("cylinder", radius, height, f64::NAN),
                GrainShape::Cube { edge } => ("cube", f64::NAN, f64::NAN, edge),
            };
            let field = |v: f64| if v.is_nan() { String::new() } else { v.to_string() };
            let _ = write!(s, "{name},{},{},{},{},{},{}", g.center[0], g.center[1], g.center[2], field(r), field(h), field(e));
            for row in &g.rotation {
                for v in row {
                    let _ = write!(s, ",{v}");
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Rotation taking the z axis onto the unit vector along `axis`.
pub fn rotation_to_axis(axis: [f64; 3]) -> Rotation {
    let n = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
    let a = axis.map(|v| v / n);
    let c = a[2];
    if c > 1.0 - 1e-15 {
        return IDENTITY;
    }
    if c < -1.0 + 1e-15 {
        return [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
    }
    // Rodrigues with k = z × a / |z × a|
    let k = [-a[1], a[0], 0.0];
    let s = (k[0] * k[0] + k[1] * k[1]).sqrt();
    let k = [k[0] / s, k[1] / s, 0.0];
    axis_angle(k, s.atan2(c))
}

/// Rotation by `angle` about the unit vector `k`.
pub fn axis_angle(k: [f64; 3], angle: f64) -> Rotation {
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * k[0] * k[0] + c, t * k[0] * k[1] - s * k[2], t * k[0] * k[2] + s * k[1]],
        [t * k[0] * k[1] + s * k[2], t * k[1] * k[1] + c, t * k[1] * k[2] - s * k[0]],
        [t * k[0] * k[2] - s * k[1], t * k[1] * k[2] + s * k[0], t * k[2] * k[2] + c],
    ]
}

/// Haar-uniform rotation from a normalized Gaussian quaternion.
pub fn uniform_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    let mut q = [0.0f64; 4];
    let mut n = 0.0;
    while n < 1e-12 {
        q = [0, 1, 2, 3].map(|_| rng.sample::<f64, _>(StandardNormal));
        n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn mark<R: Rng + ?Sized>(spec: &GrainSpec, center: Point3, rng: &mut R) -> Grain {
    let shape = match spec.shape {
        GrainShapeSpec::Sphere { radius } => GrainShape::Sphere { radius: radius.sample(rng) },
        GrainShapeSpec::Cylinder { radius, height } => GrainShape::Cylinder {
            radius: radius.sample(rng),
            height: height.sample(rng),
        },
        GrainShapeSpec::Cube { edge } => GrainShape::Cube { edge: edge.sample(rng) },
    };
    let rotation = match (spec.shape, spec.orientation) {
        (GrainShapeSpec::Sphere { .. }, _) => IDENTITY,
        (_, Orientation::Isotropic) => uniform_rotation(rng),
        (_, Orientation::Fixed { axis }) => rotation_to_axis(axis),
    };
    Grain { center, shape, rotation }
}

/// Boolean model: Poisson germs in the window dilated by the largest
/// grain circumradius, so grains centered outside still cover the window.
/// Marks of germ `i` come from stream `("mark", i)`.
pub fn sample_boolean(spec: &GrainSpec, intensity: f64, window: Window, stream: RandomStream) -> Result<GrainList> {
    spec.validate()?;
    let outer = window.dilate(spec.max_circumradius());
    let germs = sample_poisson(intensity, outer, stream.substream("germs", 0))?;
    let grains = germs
        .points
        .iter()
        .enumerate()
        .map(|(i, &c)| mark(spec, c, &mut stream.substream("mark", i as u64).rng()))
        .collect();
    Ok(GrainList { window, grains })
}

/// Spheres centered at a Matérn cluster process. Parents are dilated by
/// the largest radius on top of the cluster radius.
pub fn sample_cox_boolean_spheres(
    cluster: MaternParams,
    radius: SizeDist,
    window: Window,
    stream: RandomStream,
) -> Result<GrainList> {
    radius.validate("radius")?;
    let outer = window.dilate(radius.sup());
    let centers = sample_matern_cluster(cluster, outer, stream.substream("centers", 0))?;
    let spec = GrainSpec::spheres(radius);
    let grains = centers
        .points
        .iter()
        .enumerate()
        .map(|(i, &c)| mark(&spec, c, &mut stream.substream("mark", i as u64).rng()))
        .collect();
    Ok(GrainList { window, grains })
}

/// Solid iff the voxel center lies in at least one grain. Voxel `(i,j,k)`
/// has center `window.min + (index + ½) * spacing`; the window extent must
/// equal `dims * spacing`.
pub fn voxelize_grains(grains: &GrainList, dims: Dims, spacing: [f64; 3]) -> Result<LabelMask> {
    let w = grains.window;
    let ext = w.extent();
    let shape = dims.as_array();
    for k in 0..3 {
        let expect = shape[k] as f64 * spacing[k];
        if !(spacing[k] > 0.0) || (ext[k] - expect).abs() > 1e-9 * expect.max(1.0) {
            return Err(Error::param(
                "dims",
                format!("window extent {ext:?} does not match dims {shape:?} x spacing {spacing:?}"),
            ));
        }
    }
    let mut mask = LabelMask::new(dims);
    let slice = dims.slice_len();
    let center = |k: usize, i: usize| w.min[k] + (i as f64 + 0.5) * spacing[k];
    mask.bits_mut().par_chunks_mut(slice).enumerate().for_each(|(z, plane)| {
        let cz = center(2, z);
        for g in &grains.grains {
            let r = g.shape.circumradius();
            if (g.center[2] - cz).abs() > r {
                continue;
            }
            let range = |k: usize| {
                let lo = ((g.center[k] - r - w.min[k]) / spacing[k] - 0.5).ceil().max(0.0) as usize;
                let hi = ((g.center[k] + r - w.min[k]) / spacing[k] - 0.5).floor();
                if hi < 0.0 {
                    return lo..lo;
                }
                lo..(hi as usize + 1).min(shape[k])
            };
            for y in range(1) {
                let cy = center(1, y);
                for x in range(0) {
                    let i = x + dims.nx * y;
                    if !plane[i] && g.contains(&[center(0, x), cy, cz]) {
                        plane[i] = true;
                    }
                }
            }
        }
    });
    Ok(mask)
}
