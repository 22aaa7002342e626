//! Synthetic microstructure images with exact ground truth.
//!
//! Generators for stochastic-geometry structures (Voronoi min-cut cracks,
//! fractional Brownian cracks, Boolean grain models, face-milled height
//! maps), imaging proxies (CT background blending, FIB-SEM shine-through),
//! classical scale-invariant filters, and the metrics needed to score a
//! segmentation against the generated ground truth.

pub mod blend;
pub mod boolean;
pub mod crack;
pub mod dist;
pub mod edt;
pub mod error;
pub mod eval;
pub mod fft;
pub mod flow;
pub mod grid;
pub mod io;
pub mod milling;
pub mod points;
pub mod riesz;
pub mod rng;
pub mod segment;
pub mod sem;
pub mod tessellation;

pub use error::{Error, Result};
pub use grid::{Axis, Dims, Dtype, LabelMask, VoxelVolume};
pub use rng::RandomStream;
