use microforge_core::io::{write_gray_png, write_rgb_png};
use microforge_core::milling::{autocorrelation_eccentricity, color_code, generate_height_map, shade_preview, MillingConfig, PreviewParams, COLORMAP};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::save_volume;
use crate::config::Task;
use crate::error::{schema, stage, CliError, CliResult};
use crate::job::{Job, Replicate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MillingJob {
    pub milling: MillingConfig,
    pub preview: PreviewParams,
    /// Direction towards the light; normalized before use.
    pub light: [f64; 3],
    /// Autocorrelation level for the anisotropy statistic.
    pub eccentricity_level: f64,
}

impl Default for MillingJob {
    fn default() -> Self {
        MillingJob { milling: MillingConfig::default(), preview: PreviewParams::default(), light: [-1.0, -1.0, 2.0], eccentricity_level: 0.5 }
    }
}

impl MillingJob {
    fn light_dir(&self) -> [f64; 3] {
        let n = self.light.iter().map(|v| v * v).sum::<f64>().sqrt();
        self.light.map(|v| v / n)
    }
}

impl Job for MillingJob {
    const TASK: Task = Task::Milling;

    fn validate(&self, _replicates: usize) -> CliResult<()> {
        self.milling.validate().map_err(schema)?;
        let n = self.light.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(CliError::Schema(format!("light must be a nonzero vector, got {:?}", self.light)));
        }
        if !(self.eccentricity_level > 0.0 && self.eccentricity_level < 1.0) {
            return Err(CliError::Schema(format!("eccentricity_level must lie in (0, 1), got {}", self.eccentricity_level)));
        }
        Ok(())
    }

    fn voxels(&self) -> CliResult<u128> {
        let (nx, ny) = self.milling.grid_shape();
        Ok(nx as u128 * ny as u128)
    }

    fn run_replicate(&self, rep: &Replicate) -> CliResult<Value> {
        let hm = generate_height_map(&self.milling, rep.stream.substream("milling", 0)).map_err(stage("milling"))?;
        save_volume(rep.out, &rep.rel("heightmap.raw"), &hm.to_volume())?;
        let color = rep.out.artifact(&rep.rel("heightmap_color.png"))?;
        write_rgb_png(&color_code(&hm), hm.nx, hm.ny, &color).map_err(stage("write"))?;
        let shaded = shade_preview(&hm, self.light_dir(), self.preview).map_err(stage("preview"))?;
        let preview = rep.out.artifact(&rep.rel("preview.png"))?;
        write_gray_png(&shaded, hm.nx, hm.ny, &preview).map_err(stage("write"))?;
        let lo = hm.heights.iter().cloned().fold(0.0f32, f32::min);
        let mut warnings = Vec::new();
        if self.milling.leaves_gaps() {
            warnings.push("lateral cutting depth exceeds the head diameter; stripes stay uncut");
        }
        let stats = json!({
            "calibrated": false,
            "grid": [hm.nx, hm.ny],
            "height_min_um": lo,
            "colormap": { "stops": COLORMAP, "range_um": [lo, 0.0], "note": "first stop is the deepest cell, last stop the uncut plane" },
            "feed_per_rev_um": self.milling.feed_per_rev_um(),
            "autocorrelation_eccentricity": autocorrelation_eccentricity(&hm, self.eccentricity_level),
            "warnings": warnings,
        });
        rep.write_provenance(Task::Milling, self, stats.clone())?;
        Ok(stats)
    }
}
