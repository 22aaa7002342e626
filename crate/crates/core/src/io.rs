//! Raw volume files with JSON sidecars, and PNG slice export.
//!
//! The canonical on-disk volume is a headerless little-endian sample
//! array (x-fastest) next to a sidecar:
//!
//! ```json
//! {"dims":[nx,ny,nz],"dtype":"u16","spacing_um":[sx,sy,sz],"endianness":"LE"}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, Dims, Dtype, LabelMask, VoxelVolume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub dims: [usize; 3],
    pub dtype: String,
    pub spacing_um: [f64; 3],
    pub endianness: String,
}

impl Sidecar {
    pub fn for_volume(volume: &VoxelVolume) -> Self {
        let d = volume.dims();
        Self {
            dims: [d.nx, d.ny, d.nz],
            dtype: volume.dtype().name().to_string(),
            spacing_um: volume.spacing_um(),
            endianness: "LE".to_string(),
        }
    }

    fn dtype(&self) -> Result<Dtype> {
        match self.dtype.as_str() {
            "u16" => Ok(Dtype::U16),
            "f32" => Ok(Dtype::F32),
            other => Err(Error::UnsupportedDtype(other.to_string())),
        }
    }
}

/// Default sidecar location: `<raw path>.json`.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    let mut s = raw.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_volume(path: &Path, metadata_path: &Path) -> Result<VoxelVolume> {
    let meta = read_sidecar(metadata_path)?;
    if meta.endianness != "LE" {
        return Err(Error::Sidecar {
            path: metadata_path.to_path_buf(),
            reason: format!("endianness must be \"LE\", got {:?}", meta.endianness),
        });
    }
    let dtype = meta.dtype()?;
    let dims = Dims::new(meta.dims[0], meta.dims[1], meta.dims[2]);
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = (dims.len() * dtype.size()) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    let data: Vec<f32> = match dtype {
        Dtype::U16 => bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32 / 65535.0)
            .collect(),
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    };
    VoxelVolume::new(dims, meta.spacing_um, dtype, data)
}

/// Serializes the samples in the volume's declared dtype.
pub fn volume_bytes(volume: &VoxelVolume) -> Vec<u8> {
    let mut out = Vec::with_capacity(volume.data().len() * volume.dtype().size());
    match volume.dtype() {
        Dtype::U16 => {
            for &v in volume.data() {
                out.extend_from_slice(&quantize_u16(v).to_le_bytes());
            }
        }
        Dtype::F32 => {
            for &v in volume.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

#[inline]
pub fn quantize_u16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Writes the raw samples and the sidecar.
pub fn write_volume(volume: &VoxelVolume, path: &Path, metadata_path: &Path) -> Result<()> {
    fs::write(path, volume_bytes(volume)).map_err(|e| Error::io(path, e))?;
    let meta = serde_json::to_string_pretty(&Sidecar::for_volume(volume)).expect("sidecar serializes");
    fs::write(metadata_path, meta).map_err(|e| Error::io(metadata_path, e))
}

pub fn write_mask(mask: &LabelMask, path: &Path, metadata_path: &Path) -> Result<()> {
    write_volume(&mask_as_u16(mask), path, metadata_path)
}

/// 0/1 mask stored as u16 samples 0 and 65535.
pub fn mask_as_u16(mask: &LabelMask) -> VoxelVolume {
    mask.to_volume().with_dtype(Dtype::U16)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceExport {
    pub bit_depth: BitDepth,
    /// Gray window mapped to the full output range; min-max of the
    /// volume when `None`.
    pub window: Option<(f32, f32)>,
}

impl Default for SliceExport {
    fn default() -> Self {
        Self {
            bit_depth: BitDepth::Eight,
            window: None,
        }
    }
}

fn slice_shape(dims: Dims, axis: Axis) -> (usize, usize, usize) {
    match axis {
        Axis::X => (dims.ny, dims.nz, dims.nx),
        Axis::Y => (dims.nx, dims.nz, dims.ny),
        Axis::Z => (dims.nx, dims.ny, dims.nz),
    }
}

fn slice_index(dims: Dims, axis: Axis, k: usize, u: usize, v: usize) -> usize {
    match axis {
        Axis::X => dims.index(k, u, v),
        Axis::Y => dims.index(u, k, v),
        Axis::Z => dims.index(u, v, k),
    }
}

/// Writes one grayscale PNG per slice perpendicular to `axis` and returns
/// the number of files written.
pub fn export_slices(volume: &VoxelVolume, axis: Axis, directory: &Path, opts: SliceExport) -> Result<usize> {
    let (lo, hi) = opts.window.unwrap_or_else(|| volume.min_max());
    let scale = if hi > lo { 1.0 / (hi - lo) } else { 0.0 };
    let norm = |v: f32| ((v - lo) * scale).clamp(0.0, 1.0);
    export_with(volume.dims(), axis, directory, opts.bit_depth, |i| norm(volume.data()[i]))
}

/// Mask slices as 0/255 8-bit PNGs.
pub fn export_mask_slices(mask: &LabelMask, axis: Axis, directory: &Path) -> Result<usize> {
    export_with(mask.dims(), axis, directory, BitDepth::Eight, |i| {
        if mask.bits()[i] {
            1.0
        } else {
            0.0
        }
    })
}

fn export_with(
    dims: Dims,
    axis: Axis,
    directory: &Path,
    depth: BitDepth,
    value: impl Fn(usize) -> f32,
) -> Result<usize> {
    fs::create_dir_all(directory).map_err(|e| Error::io(directory, e))?;
    let (w, h, n) = slice_shape(dims, axis);
    for k in 0..n {
        let path = directory.join(format!("slice_{k:04}.png"));
        let px = |u: usize, v: usize| value(slice_index(dims, axis, k, u, v));
        match depth {
            BitDepth::Eight => {
                let img = ImageBuffer::from_fn(w as u32, h as u32, |u, v| {
                    Luma([(px(u as usize, v as usize) * 255.0).round() as u8])
                });
                save(&img, &path)?;
            }
            BitDepth::Sixteen => {
                let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(w as u32, h as u32, |u, v| {
                    Luma([(px(u as usize, v as usize) * 65535.0).round() as u16])
                });
                save(&img, &path)?;
            }
        }
    }
    Ok(n)
}

fn save<P, C>(img: &ImageBuffer<P, C>, path: &Path) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Writes a `[0, 1]` gray image (row-major, `width` columns) as 8-bit PNG.
pub fn write_gray_png(values: &[f32], width: usize, height: usize, path: &Path) -> Result<()> {
    let img = ImageBuffer::from_fn(width as u32, height as u32, |u, v| {
        Luma([(values[u as usize + width * v as usize].clamp(0.0, 1.0) * 255.0).round() as u8])
    });
    save(&img, path)
}

pub fn write_rgb_png(pixels: &[[u8; 3]], width: usize, height: usize, path: &Path) -> Result<()> {
    let img = ImageBuffer::from_fn(width as u32, height as u32, |u, v| Rgb(pixels[u as usize + width * v as usize]));
    save(&img, path)
}

/// Reads any PNG as gray values in `[0, 1]`; returns `(values, width, height)`.
pub fn read_gray_png(path: &Path) -> Result<(Vec<f32>, usize, usize)> {
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            source: e,
        })?
        .into_luma16();
    let (w, h) = img.dimensions();
    Ok((
        img.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
        w as usize,
        h as usize,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn reads_zero_u16_volume() {
        let dir = tmp();
        let raw = dir.path().join("z.raw");
        fs::write(&raw, [0u8; 16]).unwrap();
        fs::write(
            sidecar_path(&raw),
            r#"{"dims":[2,2,2],"dtype":"u16","spacing_um":[23,23,23],"endianness":"LE"}"#,
        )
        .unwrap();
        let v = read_volume(&raw, &sidecar_path(&raw)).unwrap();
        assert_eq!(v.data(), &[0.0; 8]);
        assert_eq!(v.spacing_um(), [23.0; 3]);
    }

    #[test]
    fn rejects_size_mismatch_and_dtype() {
        let dir = tmp();
        let raw = dir.path().join("z.raw");
        fs::write(&raw, [0u8; 15]).unwrap();
        let meta = sidecar_path(&raw);
        fs::write(&meta, r#"{"dims":[2,2,2],"dtype":"u16","spacing_um":[1,1,1],"endianness":"LE"}"#).unwrap();
        assert!(matches!(read_volume(&raw, &meta), Err(Error::SizeMismatch { .. })));
        fs::write(&meta, r#"{"dims":[2,2,2],"dtype":"u8","spacing_um":[1,1,1],"endianness":"LE"}"#).unwrap();
        assert!(matches!(read_volume(&raw, &meta), Err(Error::UnsupportedDtype(_))));
    }

    #[test]
    fn slice_export_counts_and_constant_window() {
        let dir = tmp();
        let v = VoxelVolume::filled(Dims::cube(4), 0.25);
        let n = export_slices(&v, Axis::Z, dir.path(), SliceExport { window: Some((0.0, 1.0)), ..Default::default() }).unwrap();
        assert_eq!(n, 4);
        for k in 0..4 {
            let (px, w, h) = read_gray_png(&dir.path().join(format!("slice_{k:04}.png"))).unwrap();
            assert_eq!((w, h), (4, 4));
            assert!(px.iter().all(|&p| p == px[0]));
        }
    }

    #[test]
    fn mask_slices_are_binary() {
        let dir = tmp();
        let m = LabelMask::from_fn(Dims::new(3, 5, 2), |x, y, _| x == y);
        assert_eq!(export_mask_slices(&m, Axis::X, dir.path()).unwrap(), 3);
        let (px, w, h) = read_gray_png(&dir.path().join("slice_0001.png")).unwrap();
        assert_eq!((w, h), (5, 2));
        assert!(px.iter().all(|&p| p == 0.0 || p == 1.0));
        assert_eq!(px.iter().filter(|&&p| p == 1.0).count(), 2);
    }

    #[test]
    fn unwritable_directory_fails() {
        let dir = tmp();
        let file = dir.path().join("f");
        fs::write(&file, b"x").unwrap();
        let v = VoxelVolume::filled(Dims::cube(2), 0.0);
        assert!(export_slices(&v, Axis::Z, &file.join("sub"), SliceExport::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn raw_round_trip_is_bit_exact(words in proptest::collection::vec(any::<u16>(), 24), as_float in any::<bool>()) {
            let dir = tmp();
            let raw = dir.path().join("v.raw");
            let bytes: Vec<u8> = if as_float {
                words.chunks(2).flat_map(|c| {
                    let f = f32::from_bits((c[0] as u32) << 16 | c[1] as u32);
                    let f = if f.is_nan() { 0.5 } else { f };
                    f.to_le_bytes()
                }).collect()
            } else {
                words.iter().flat_map(|w| w.to_le_bytes()).collect()
            };
            let (dims, dtype) = if as_float { ([3, 2, 2], "f32") } else { ([2, 3, 4], "u16") };
            fs::write(&raw, &bytes).unwrap();
            let meta = sidecar_path(&raw);
            fs::write(&meta, format!(r#"{{"dims":{dims:?},"dtype":"{dtype}","spacing_um":[20,20,2.8],"endianness":"LE"}}"#)).unwrap();
            let v = read_volume(&raw, &meta).unwrap();
            let out = dir.path().join("w.raw");
            write_volume(&v, &out, &sidecar_path(&out)).unwrap();
            prop_assert_eq!(fs::read(&out).unwrap(), bytes);
            prop_assert_eq!(read_volume(&out, &sidecar_path(&out)).unwrap(), v);
        }
    }
}
