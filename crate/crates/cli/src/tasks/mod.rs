mod boolean;
mod crack;
mod eval;
mod milling;
mod segment;
mod sem;

pub use boolean::{generate_solid, BooleanJob, Process};
pub use crack::{generate_crack, Background, CrackJob, CrackSample, GermModel, SurfaceModel, WidthModel};
pub use eval::{EvalJob, SCORES_CSV, SUMMARY_JSON};
pub use milling::MillingJob;
pub use segment::{PlateParams, SegmentJob, Segmenter, SegmenterMethod};
pub use sem::{SemJob, SolidSource};

use microforge_core::io::{export_mask_slices, export_slices, mask_as_u16, write_volume, SliceExport};
use microforge_core::{Axis, LabelMask, VoxelVolume};

use crate::error::{stage, CliResult};
use crate::output::OutDir;

/// Raw volume plus `<rel>.json` sidecar.
pub(crate) fn save_volume(out: &OutDir, rel: &str, volume: &VoxelVolume) -> CliResult<()> {
    let raw = out.artifact(rel)?;
    let meta = out.artifact(&format!("{rel}.json"))?;
    write_volume(volume, &raw, &meta).map_err(stage("write"))
}

/// 0/1 mask stored as u16 (0 and 65535) with the volume's spacing.
pub(crate) fn save_mask(out: &OutDir, rel: &str, mask: &LabelMask, spacing_um: [f64; 3]) -> CliResult<()> {
    save_volume(out, rel, &mask_as_u16(mask).with_spacing(spacing_um))
}

/// One PNG per z-slice under `dir`, each registered as an artifact.
pub(crate) fn save_slices(out: &OutDir, dir: &str, volume: Option<&VoxelVolume>, mask: Option<&LabelMask>, opts: SliceExport) -> CliResult<()> {
    let path = out.path(&format!("{dir}/slice_0000.png"))?;
    let root = path.parent().expect("slice path has a parent");
    let n = match (volume, mask) {
        (Some(v), _) => export_slices(v, Axis::Z, root, opts),
        (None, Some(m)) => export_mask_slices(m, Axis::Z, root),
        (None, None) => Ok(0),
    }
    .map_err(stage("write"))?;
    for k in 0..n {
        out.artifact(&format!("{dir}/slice_{k:04}.png"))?;
    }
    Ok(())
}
