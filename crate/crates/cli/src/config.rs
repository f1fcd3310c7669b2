//! JSON run configuration shared by every subcommand.
//!
//! Every section is optional and falls back to its defaults. The top-level
//! `seed` and `grid` are authoritative: they replace the seeds and grid
//! settings nested inside the other sections.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scenaug::base_aug::BaseAugConfig;
use scenaug::eval::{FewShotConfig, LinearEvalConfig, Linkage, STABILITY_KS};
use scenaug::expert::AugmentationPolicy;
use scenaug::ingest::LabelConfig;
use scenaug::raster::GridConfig;
use scenaug::ssl::TrainConfig;
use scenaug::synth::SuiteSpec;
use scenaug::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub linkage: Linkage,
    /// Cluster count for zero-shot evaluation; the label class count when absent.
    pub clusters: Option<usize>,
    /// Held-out fraction for the linear probe and few-shot evaluation.
    pub test_fraction: f64,
    pub linear: LinearEvalConfig,
    pub few_shot: FewShotConfig,
    pub few_shot_fractions: Vec<f64>,
    pub stability_ks: Vec<usize>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            linkage: Linkage::Ward,
            clusters: None,
            test_fraction: 0.3,
            linear: LinearEvalConfig::default(),
            few_shot: FewShotConfig::default(),
            few_shot_fractions: vec![0.1],
            stability_ks: STABILITY_KS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelSettings {
    pub turn_threshold_deg: f64,
}

impl Default for LabelSettings {
    fn default() -> Self {
        Self {
            turn_threshold_deg: LabelConfig::default().turn_threshold_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub policy: AugmentationPolicy,
    pub base_aug: BaseAugConfig,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub labels: LabelSettings,
    pub synth: SuiteSpec,
    /// Scenario input used by `train`, `eval` and `ablate-vr` when no flag is given.
    pub data: Option<PathBuf>,
    /// Labeled-dataset input used by `eval` and `ablate-vr` when no flag is given.
    pub labels_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut de = serde_json::Deserializer::from_slice(&bytes);
        serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Schema {
            path: format!("{}: {}", path.display(), e.path()),
            message: e.inner().to_string(),
        })
    }

    /// Pushes the top-level seed and grid into the nested sections and
    /// validates the result.
    pub fn resolve(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        self.train.grid = self.grid;
        self.policy.seed = self.seed;
        self.synth.seed = self.seed;
        self.eval.linear.seed = self.seed;
        self.eval.few_shot.seed = self.seed;
        self.grid.validate()?;
        self.policy.validate()?;
        self.base_aug.validate(self.grid.height, self.grid.width)?;
        self.train.validate()?;
        let e = &self.eval;
        if !(e.test_fraction > 0.0 && e.test_fraction < 1.0) {
            return Err(Error::Config(format!("test fraction {} outside (0, 1)", e.test_fraction)));
        }
        if let Some(f) = e.few_shot_fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::Config(format!("few-shot fraction {f} outside (0, 1]")));
        }
        if e.clusters == Some(0) || e.stability_ks.contains(&0) {
            return Err(Error::Config("cluster and neighbor counts must be positive".into()));
        }
        if !self.labels.turn_threshold_deg.is_finite() || self.labels.turn_threshold_deg <= 0.0 {
            return Err(Error::Config("turn threshold must be positive".into()));
        }
        Ok(self)
    }

    pub fn label_config(&self) -> LabelConfig {
        LabelConfig {
            turn_threshold_deg: self.labels.turn_threshold_deg,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        let r = c.resolve().unwrap();
        assert_eq!(r.train.batch_size, 64);
        assert_eq!(r.eval.stability_ks, vec![1, 5, 10, 20, 50, 100]);
    }

    #[test]
    fn seed_and_grid_propagate() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 9, "grid": {"height": 60, "width": 60, "ego_pixel": [20, 30]}, "base_aug": {"crop": [40, 40]}}"#).unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.train.seed, 9);
        assert_eq!(r.policy.seed, 9);
        assert_eq!(r.eval.few_shot.seed, 9);
        assert_eq!(r.train.grid.height, 60);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"train": {"epochs": 3, "bogus": 1}}"#).unwrap();
        match RunConfig::load(Some(&p)) {
            Err(Error::Schema { path, .. }) => assert!(path.ends_with("train.bogus"), "{path}"),
            other => panic!("{other:?}"),
        }
        let c: RunConfig = serde_json::from_str(r#"{"eval": {"test_fraction": 1.5}}"#).unwrap();
        assert!(matches!(c.resolve(), Err(Error::Config(_))));
        let c: RunConfig = serde_json::from_str(r#"{"base_aug": {"crop": [200, 10]}}"#).unwrap();
        assert!(c.resolve().is_err());
    }
}
