use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DetectorConfig;
use crate::fuzzy::{RuleConfig, DEFAULT_PRUNE_DISTANCE};
use crate::imaging::{NiblackParams, Orientation, TIZHOOSH_DEFAULT_ALPHA};
use crate::selection::SelectionConfig;

/// Name of the only parent technique, used to look up its pruning distance.
pub const THRESHOLD_TECHNIQUE: &str = "threshold";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossValidationConfig {
    pub trials: usize,
    /// Fraction of the images tested in each trial.
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for CrossValidationConfig {
    fn default() -> Self {
        Self {
            trials: 10,
            test_fraction: 0.2,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectConfig {
    pub image_dir: PathBuf,
    pub gold_dir: PathBuf,
    pub orientation: Orientation,
    pub selection: SelectionConfig,
    pub detector: DetectorConfig,
    pub cluster: RuleConfig,
    /// Pruning distance per parent technique.
    pub prune_distances: BTreeMap<String, f64>,
    pub niblack: NiblackParams,
    pub tizhoosh_alpha: f64,
    pub cross_validation: CrossValidationConfig,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            image_dir: PathBuf::from("images"),
            gold_dir: PathBuf::from("gold"),
            orientation: Orientation::default(),
            selection: SelectionConfig::default(),
            detector: DetectorConfig::default(),
            cluster: RuleConfig::default(),
            prune_distances: BTreeMap::from([(
                THRESHOLD_TECHNIQUE.to_string(),
                DEFAULT_PRUNE_DISTANCE,
            )]),
            niblack: NiblackParams::default(),
            tizhoosh_alpha: TIZHOOSH_DEFAULT_ALPHA,
            cross_validation: CrossValidationConfig::default(),
        }
    }
}

impl ProjectConfig {
    pub fn d_min(&self) -> f64 {
        self.prune_distances
            .get(THRESHOLD_TECHNIQUE)
            .copied()
            .unwrap_or(DEFAULT_PRUNE_DISTANCE)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be in (0, 1], got {v}")))
            }
        };
        in_unit("duplicate_threshold", self.selection.duplicate_threshold)?;
        in_unit("similarity_threshold", self.selection.similarity_threshold)?;
        in_unit("cluster radius", self.cluster.radius)?;
        in_unit("test_fraction", self.cross_validation.test_fraction)?;
        if self.prune_distances.values().any(|&d| d.is_nan() || d < 0.0) {
            return Err(Error::param("pruning distances must be nonnegative"));
        }
        if self.cross_validation.trials == 0 {
            return Err(Error::param("at least one trial is required"));
        }
        if self.niblack.window < 3 || self.niblack.window.is_multiple_of(2) || !self.niblack.k.is_finite() {
            return Err(Error::param(format!(
                "niblack window must be odd and at least 3, and k finite; got {} and {}",
                self.niblack.window, self.niblack.k
            )));
        }
        Ok(())
    }

    /// Directories are resolved relative to `base` unless absolute.
    pub fn resolve(&self, base: &Path) -> (PathBuf, PathBuf) {
        (base.join(&self.image_dir), base.join(&self.gold_dir))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_slice(&bytes)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::write_atomic(path.as_ref(), &serde_json::to_vec_pretty(self)?)
    }
}
