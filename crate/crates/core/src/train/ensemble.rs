use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fedavg::{dp_fedavg_train, FedAvgConfig};
use super::linear::{FeatureMap, LinearQ};
use super::sgm::{sgm_train, SgmConfig};
use crate::accountant::{AccountantInputs, PrivacyLevel};
use crate::error::{Error, Result};
use crate::harness::io::write_atomic;
use crate::mdp::{Dataset, State};
use crate::rng;

/// Which private trainer produces the instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum TrainerConfig {
    Sgm(SgmConfig),
    Fedavg(FedAvgConfig),
}

impl TrainerConfig {
    pub fn level(&self) -> PrivacyLevel {
        match self {
            TrainerConfig::Sgm(_) => PrivacyLevel::Transition,
            TrainerConfig::Fedavg(_) => PrivacyLevel::Trajectory,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TrainerConfig::Sgm(c) => c.validate(),
            TrainerConfig::Fedavg(c) => c.validate(),
        }
    }

    pub fn accountant_inputs(&self) -> AccountantInputs {
        match self {
            TrainerConfig::Sgm(c) => AccountantInputs {
                level: PrivacyLevel::Transition,
                sample_rate: c.sample_rate,
                noise_multiplier: c.noise_multiplier,
                steps: c.iterations,
            },
            TrainerConfig::Fedavg(c) => AccountantInputs {
                level: PrivacyLevel::Trajectory,
                sample_rate: c.sample_rate,
                noise_multiplier: c.noise_multiplier,
                steps: c.outer_iterations,
            },
        }
    }

    fn clip_norm(&self) -> f64 {
        match self {
            TrainerConfig::Sgm(c) => c.clip_norm,
            TrainerConfig::Fedavg(c) => c.clip_norm,
        }
    }

    fn learning_rate(&self) -> f64 {
        match self {
            TrainerConfig::Sgm(c) => c.learning_rate,
            TrainerConfig::Fedavg(c) => c.learning_rate,
        }
    }

    pub fn train<R: rand::Rng + ?Sized>(
        &self,
        dataset: &Dataset,
        feature_map: FeatureMap,
        n_actions: usize,
        rng: &mut R,
    ) -> Result<LinearQ> {
        match self {
            TrainerConfig::Sgm(c) => sgm_train(dataset, feature_map, n_actions, c, rng),
            TrainerConfig::Fedavg(c) => dp_fedavg_train(dataset, feature_map, n_actions, c, rng),
        }
    }
}

/// Training provenance; the accountant inputs are all a certificate needs.
///
/// Serialised as the ensemble's `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub p: usize,
    pub level: PrivacyLevel,
    pub q: f64,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub steps: usize,
    #[serde(rename = "C")]
    pub clip_norm: f64,
    pub eta: f64,
    pub seeds: Vec<u64>,
    pub env: String,
    pub feature_map: String,
    pub n_actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl TrainingMeta {
    pub fn accountant_inputs(&self) -> AccountantInputs {
        AccountantInputs { level: self.level, sample_rate: self.q, noise_multiplier: self.sigma, steps: self.steps }
    }
}

/// `p` independently trained instances: the empirical form of the
/// randomised policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEnsemble {
    pub instances: Vec<LinearQ>,
    pub meta: TrainingMeta,
}

impl PolicyEnsemble {
    pub fn p(&self) -> usize {
        self.instances.len()
    }

    pub fn n_actions(&self) -> usize {
        self.meta.n_actions
    }

    /// Greedy action of every instance at `state`.
    pub fn greedy_actions(&self, state: &State) -> Result<Vec<usize>> {
        self.instances.iter().map(|m| m.greedy(state)).collect()
    }

    /// Writes `manifest.json` and `instance_<i>.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(&self.meta)?.as_bytes())?;
        for (i, inst) in self.instances.iter().enumerate() {
            write_atomic(&dir.join(format!("instance_{i}.json")), serde_json::to_string(&inst.weights)?.as_bytes())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = std::fs::read_to_string(dir.join("manifest.json"))?;
        let meta: TrainingMeta =
            serde_json::from_str(&manifest).map_err(|e| Error::Format(format!("ensemble manifest: {e}")))?;
        let feature_map = FeatureMap::from_id(&meta.feature_map)?;
        let expected_len = feature_map.dim() * meta.n_actions;
        let mut instances = Vec::with_capacity(meta.p);
        for i in 0..meta.p {
            let text = std::fs::read_to_string(dir.join(format!("instance_{i}.json")))?;
            let weights: Vec<f64> =
                serde_json::from_str(&text).map_err(|e| Error::Format(format!("instance {i}: {e}")))?;
            if weights.len() != expected_len {
                return Err(Error::Format(format!(
                    "instance {i} has {} weights, expected {expected_len}",
                    weights.len()
                )));
            }
            instances.push(LinearQ { feature_map, n_actions: meta.n_actions, weights });
        }
        Ok(PolicyEnsemble { instances, meta })
    }
}

/// Trains `p` instances, instance `i` on the rng stream
/// `child_seed(master_seed, i)`. Results do not depend on `parallel`.
pub fn train_ensemble(
    dataset: &Dataset,
    feature_map: FeatureMap,
    n_actions: usize,
    config: &TrainerConfig,
    p: usize,
    master_seed: u64,
    parallel: bool,
) -> Result<PolicyEnsemble> {
    if p == 0 {
        return Err(Error::input("ensemble needs at least one instance"));
    }
    config.validate()?;
    let seeds: Vec<u64> = (0..p as u64).map(|i| rng::child_seed(master_seed, i)).collect();
    let train_one = |seed: &u64| config.train(dataset, feature_map, n_actions, &mut rng::stream(*seed));
    let instances: Result<Vec<LinearQ>> = if parallel {
        seeds.par_iter().map(train_one).collect()
    } else {
        seeds.iter().map(train_one).collect()
    };
    let inputs = config.accountant_inputs();
    Ok(PolicyEnsemble {
        instances: instances?,
        meta: TrainingMeta {
            p,
            level: config.level(),
            q: inputs.sample_rate,
            sigma: inputs.noise_multiplier,
            steps: inputs.steps,
            clip_norm: config.clip_norm(),
            eta: config.learning_rate(),
            seeds,
            env: dataset.meta.env.clone(),
            feature_map: feature_map.id(),
            n_actions,
            config_hash: None,
        },
    })
}
