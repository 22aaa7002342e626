//! Voxel containers.
//!
//! All grids are stored x-fastest: the linear index of `(x, y, z)` is
//! `x + nx * (y + ny * z)`. A 2D image is a grid with `nz == 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn axis_len(&self, axis: Axis) -> usize {
        self.as_array()[axis.index()]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.nx;
        let yz = i / self.nx;
        [x, yz % self.ny, yz / self.ny]
    }

    pub fn slice_len(&self) -> usize {
        self.nx * self.ny
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::param("dims", format!("all dimensions must be positive, got {self:?}")));
        }
        Ok(())
    }

    pub(crate) fn expect(&self, other: Dims) -> Result<()> {
        if *self != other {
            return Err(Error::DimMismatch {
                expected: self.as_array(),
                found: other.as_array(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        Self::ALL.get(i).copied()
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            _ => Err(Error::param("axis", format!("expected x, y or z, got `{s}`"))),
        }
    }
}

/// On-disk sample type of a volume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U16,
    F32,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::U16 => 2,
            Dtype::F32 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::U16 => "u16",
            Dtype::F32 => "f32",
        }
    }
}

/// Scalar voxel grid with physical spacing.
///
/// Values are held as `f32`. For `Dtype::U16` volumes they are the raw
/// counts divided by 65535, so gray values live in `[0, 1]` and are only
/// quantized again on export.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelVolume {
    dims: Dims,
    spacing_um: [f64; 3],
    dtype: Dtype,
    data: Vec<f32>,
}

impl VoxelVolume {
    pub fn new(dims: Dims, spacing_um: [f64; 3], dtype: Dtype, data: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(Error::param(
                "data",
                format!("length {} does not match dims {:?}", data.len(), dims),
            ));
        }
        if spacing_um.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::param("spacing_um", format!("must be positive, got {spacing_um:?}")));
        }
        Ok(Self {
            dims,
            spacing_um,
            dtype,
            data,
        })
    }

    pub fn filled(dims: Dims, value: f32) -> Self {
        Self {
            dims,
            spacing_um: [1.0; 3],
            dtype: Dtype::F32,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Self {
            dims,
            spacing_um: [1.0; 3],
            dtype: Dtype::F32,
            data,
        }
    }

    pub fn with_spacing(mut self, spacing_um: [f64; 3]) -> Self {
        self.spacing_um = spacing_um;
        self
    }

    pub fn with_dtype(mut self, dtype: Dtype) -> Self {
        self.dtype = dtype;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing_um(&self) -> [f64; 3] {
        self.spacing_um
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f32) {
        let i = self.dims.index(x, y, z);
        self.data[i] = v;
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Binary voxel mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    dims: Dims,
    bits: Vec<bool>,
}

impl LabelMask {
    pub fn new(dims: Dims) -> Self {
        Self {
            dims,
            bits: vec![false; dims.len()],
        }
    }

    pub fn from_bits(dims: Dims, bits: Vec<bool>) -> Result<Self> {
        dims.validate()?;
        if bits.len() != dims.len() {
            return Err(Error::param(
                "bits",
                format!("length {} does not match dims {:?}", bits.len(), dims),
            ));
        }
        Ok(Self { dims, bits })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(dims.len());
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    bits.push(f(x, y, z));
                }
            }
        }
        Self { dims, bits }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.dims.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.dims.index(x, y, z);
        self.bits[i] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    /// Voxel-wise union. Dims must match.
    pub fn union_with(&mut self, other: &LabelMask) -> Result<()> {
        self.dims.expect(other.dims)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    pub fn is_subset_of(&self, other: &LabelMask) -> bool {
        self.dims == other.dims && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// 0/1 volume, handy for filters and export.
    pub fn to_volume(&self) -> VoxelVolume {
        VoxelVolume {
            dims: self.dims,
            spacing_um: [1.0; 3],
            dtype: Dtype::U16,
            data: self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Nonzero voxels of `volume`.
    pub fn from_volume(volume: &VoxelVolume) -> Self {
        Self {
            dims: volume.dims(),
            bits: volume.data().iter().map(|&v| v != 0.0).collect(),
        }
    }
}
