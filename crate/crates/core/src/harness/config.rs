use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arm::ArmModel;
use crate::calibration::{GainGrid, DEFAULT_RIDGE_LAMBDA};
use crate::error::{Error, Result};
use crate::planner::DEFAULT_TEMPLATE_COUNT;
use crate::vec2::Vec2;

/// Experiment description, read from a JSON file. Every field has a
/// default, so `{}` is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Arm parameter file; the built-in arm when absent.
    pub arm: Option<PathBuf>,
    /// Master seed for the library and the targets.
    pub seed: u64,
    pub library: LibrarySpec,
    pub targets: TargetSpec,
    /// Templates blended per movement.
    pub num_templates: usize,
    pub gain_grid: GainGrid,
    pub ridge_lambda: f64,
    /// Online learning rounds after the off-line bootstrap.
    pub rounds: usize,
    pub output: OutputSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            arm: None,
            seed: 7,
            library: LibrarySpec::default(),
            targets: TargetSpec::default(),
            num_templates: DEFAULT_TEMPLATE_COUNT,
            gain_grid: GainGrid::default(),
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            rounds: 5,
            output: OutputSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LibrarySpec {
    /// Existing library file. When absent a library is generated.
    pub path: Option<PathBuf>,
    pub count: usize,
    /// Generation seed, the master seed when absent.
    pub seed: Option<u64>,
    pub max_amplitude: f64,
    /// Re-simulate every template of a loaded library.
    pub verify: bool,
}

impl Default for LibrarySpec {
    fn default() -> Self {
        LibrarySpec {
            path: None,
            count: 50,
            seed: None,
            max_amplitude: 0.6,
            verify: false,
        }
    }
}

/// Axis-aligned rectangle in the shoulder frame (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub min: Vec2,
    pub max: Vec2,
}

impl Region {
    fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            Vec2::new(self.max.x, self.min.y),
            self.max,
            Vec2::new(self.min.x, self.max.y),
        ]
    }

    /// Distance from the origin to the closest point of the rectangle.
    fn min_norm(&self) -> f64 {
        let x = 0.0f64.clamp(self.min.x, self.max.x);
        let y = 0.0f64.clamp(self.min.y, self.max.y);
        Vec2::new(x, y).norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetSpec {
    pub count: usize,
    /// Sampling seed, the master seed when absent.
    pub seed: Option<u64>,
    /// Sampling rectangle; derived from the template cloud when absent.
    pub region: Option<Region>,
    /// Fraction of the template bounding box trimmed off a derived region.
    pub shrink: f64,
    /// Draw new targets for every online round instead of repeating the
    /// calibration targets.
    pub fresh_per_round: bool,
    /// Explicit targets; overrides sampling.
    pub points: Option<Vec<Vec2>>,
}

impl Default for TargetSpec {
    fn default() -> Self {
        TargetSpec {
            count: 25,
            seed: None,
            region: None,
            shrink: 0.1,
            fresh_per_round: false,
            points: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::schema(text, &e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Makes relative paths relative to `base` (the config file directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        for path in [
            &mut self.arm,
            &mut self.library.path,
            &mut self.output.csv,
            &mut self.output.json,
        ]
        .into_iter()
        .flatten()
        {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn validate(&self, model: &ArmModel) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_templates == 0 {
            return bad("num_templates must be at least 1".into());
        }
        if self.library.path.is_none() && self.library.count < self.num_templates {
            return bad(format!(
                "library count {} is smaller than num_templates {}",
                self.library.count, self.num_templates
            ));
        }
        if !(self.library.max_amplitude > 0.0 && self.library.max_amplitude <= 1.0) {
            return bad("library max_amplitude must be in (0, 1]".into());
        }
        match &self.targets.points {
            Some(points) if points.is_empty() => return bad("targets.points is empty".into()),
            Some(_) => {}
            None if self.targets.count == 0 => {
                return bad("targets.count must be at least 1".into())
            }
            None => {}
        }
        if !(0.0..1.0).contains(&self.targets.shrink) {
            return bad("targets.shrink must be in [0, 1)".into());
        }
        if self.gain_grid.min > self.gain_grid.max {
            return bad(format!(
                "gain grid [{}, {}] is empty",
                self.gain_grid.min, self.gain_grid.max
            ));
        }
        if !(self.ridge_lambda >= 0.0 && self.ridge_lambda.is_finite()) {
            return bad("ridge_lambda must be finite and non-negative".into());
        }
        let (inner, outer) = model.reach_bounds();
        if let Some(region) = &self.targets.region {
            if !(region.min.x < region.max.x && region.min.y < region.max.y) {
                return bad("target region is empty".into());
            }
            if region.corners().iter().any(|c| c.norm() > outer) || region.min_norm() < inner {
                return bad(format!(
                    "target region leaves the reachable annulus {inner:.3} <= r <= {outer:.3}"
                ));
            }
        }
        if let Some(points) = &self.targets.points {
            if let Some(p) = points
                .iter()
                .find(|p| !(p.norm() >= inner && p.norm() <= outer))
            {
                return bad(format!("target {p} is out of reach"));
            }
        }
        Ok(())
    }
}
