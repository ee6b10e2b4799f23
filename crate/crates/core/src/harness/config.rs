//! Experiment configuration: one JSON document, overridable by dotted
//! `key=value` paths, identified by a SHA-256 hash of its resolved form.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::accountant::PrivacyLevel;
use crate::attacks::AttackSpec;
use crate::cert::policy::{DEFAULT_DELTA_GRID, DEFAULT_R_RANGE};
use crate::cert::action::DEFAULT_R_MAX;
use crate::error::{Error, Result};
use crate::mdp::{BehaviorPolicy, GridWorldConfig};
use crate::rng;
use crate::train::{FeatureMap, TrainerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    #[serde(rename = "M")]
    pub trajectories: usize,
    pub behavior_epsilon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    /// Must agree with the trainer when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<PrivacyLevel>,
    pub trainer: TrainerConfig,
    pub p: usize,
    pub seed: u64,
    #[serde(default = "yes")]
    pub parallel: bool,
}

fn yes() -> bool {
    true
}

fn default_delta_grid() -> Vec<f64> {
    DEFAULT_DELTA_GRID.to_vec()
}

fn default_r_range() -> Vec<u32> {
    DEFAULT_R_RANGE.to_vec()
}

fn default_r_max() -> u32 {
    DEFAULT_R_MAX
}

fn default_episodes() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyBlock {
    pub delta_conf: f64,
    pub alpha_conf: f64,
    #[serde(default = "default_delta_grid")]
    pub delta_grid: Vec<f64>,
    #[serde(default = "default_r_range")]
    pub r_range: Vec<u32>,
    #[serde(default = "default_r_max")]
    pub r_max: u32,
    pub rollouts_per_instance: usize,
    /// Episodes played for action-level certification.
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    pub seed: u64,
}

fn default_trials() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoundnessBlock {
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: GridWorldConfig,
    pub data: DataBlock,
    pub train: TrainBlock,
    pub certify: CertifyBlock,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
    pub soundness: SoundnessBlock,
    pub output: PathBuf,
}

impl ExperimentConfig {
    /// Parses a config document, applies `overrides` (dotted path, value)
    /// and an optional master seed, then validates.
    pub fn load(text: &str, overrides: &[(String, String)], seed: Option<u64>) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::config(format!("config is not JSON: {e}")))?;
        for (path, value) in overrides {
            apply_override(&mut doc, path, value)?;
        }
        let mut cfg: ExperimentConfig =
            serde_json::from_value(doc).map_err(|e| Error::config(format!("config schema: {e}")))?;
        if let Some(s) = seed {
            cfg.reseed(s);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path, overrides: &[(String, String)], seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::load(&text, overrides, seed)
    }

    /// Derives every seed in the config from one master seed.
    pub fn reseed(&mut self, seed: u64) {
        self.data.seed = rng::mix(seed, 0);
        self.train.seed = rng::mix(seed, 1);
        self.certify.seed = rng::mix(seed, 2);
        self.soundness.seed = rng::mix(seed, 3);
        for (k, a) in self.attacks.iter_mut().enumerate() {
            a.seed = rng::mix(seed, 4 + k as u64);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate().map_err(|e| Error::config(format!("env: {e}")))?;
        let d = &self.data;
        if d.trajectories == 0 || !(0.0..=1.0).contains(&d.behavior_epsilon) {
            return Err(Error::config("data: M must be positive and behavior_epsilon in [0, 1]"));
        }
        let t = &self.train;
        t.trainer.validate()?;
        if let Some(level) = t.level {
            if level != t.trainer.level() {
                return Err(Error::config(format!(
                    "train.level {} does not match the {} trainer",
                    level.as_str(),
                    t.trainer.level().as_str()
                )));
            }
        }
        if t.p == 0 {
            return Err(Error::config("train.p must be at least 1"));
        }
        let c = &self.certify;
        if !(c.delta_conf > 0.0 && c.delta_conf < 1.0) || !(c.alpha_conf > 0.0 && c.alpha_conf < 1.0) {
            return Err(Error::config("certify: delta_conf and alpha_conf must lie in (0, 1)"));
        }
        if c.delta_grid.is_empty() || c.delta_grid.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
            return Err(Error::config("certify.delta_grid needs values in (0, 1)"));
        }
        if c.r_range.is_empty() || c.r_max == 0 || c.rollouts_per_instance == 0 || c.episodes == 0 {
            return Err(Error::config("certify: r_range, r_max, rollouts_per_instance and episodes must be non-empty"));
        }
        if self.soundness.trials == 0 {
            return Err(Error::config("soundness.trials must be at least 1"));
        }
        Ok(())
    }

    pub fn feature_map(&self) -> FeatureMap {
        FeatureMap::OneHot { n_states: self.env.n_states() }
    }

    pub fn behavior(&self) -> BehaviorPolicy {
        BehaviorPolicy { epsilon: self.data.behavior_epsilon }
    }

    /// Hex SHA-256 of the resolved config's canonical JSON.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut s = vec![self.data.seed, self.train.seed, self.certify.seed, self.soundness.seed];
        s.extend(self.attacks.iter().map(|a| a.seed));
        s
    }
}

/// Sets `path` (dot separated; numeric segments index arrays) to `raw`,
/// parsed as JSON when possible and as a string otherwise.
pub fn apply_override(doc: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::config(format!("bad override path {path:?}")));
    }
    let mut node = doc;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| Error::config(format!("override {path:?}: {seg:?} is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::config(format!("override {path:?}: index {idx} beyond {len}")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(format!("override {path:?}: {seg:?} is inside a scalar"))),
        };
    }
    unreachable!("loop returns on the last segment")
}
