//! Trajectory-level private training with DP federated averaging: each
//! sampled trajectory plays the role of one client.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linear::{clip_factor, l2_norm, td_sparse, FeatureMap, LinearQ};
use super::sgm::{add_gaussian_noise, poisson_sample};
use crate::error::{Error, Result};
use crate::mdp::Dataset;

fn yes() -> bool {
    true
}

fn default_refresh() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedAvgConfig {
    /// Poisson inclusion probability of each trajectory per round.
    pub sample_rate: f64,
    pub noise_multiplier: f64,
    pub clip_norm: f64,
    /// Disabling clipping is only meaningful without noise; it turns the
    /// trainer into plain federated averaging.
    #[serde(default = "yes")]
    pub clip: bool,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub outer_iterations: usize,
    #[serde(default)]
    pub discount: Option<f64>,
    /// Expected trajectory count; must equal the dataset's when given.
    #[serde(default)]
    pub trajectory_count: Option<usize>,
    /// Target network refresh period, in rounds.
    #[serde(default = "default_refresh")]
    pub target_refresh: usize,
}

impl FedAvgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::config(format!("sample_rate {} outside (0, 1]", self.sample_rate)));
        }
        if !(self.noise_multiplier >= 0.0) {
            return Err(Error::config("noise_multiplier must be non-negative"));
        }
        if !(self.clip_norm > 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::config("clip_norm and learning_rate must be positive"));
        }
        if !self.clip && self.noise_multiplier > 0.0 {
            return Err(Error::config("noise requires clipping"));
        }
        if self.local_epochs == 0 || self.batch_size == 0 || self.outer_iterations == 0 || self.target_refresh == 0 {
            return Err(Error::config("local_epochs, batch_size, outer_iterations and target_refresh must be at least 1"));
        }
        Ok(())
    }
}

/// Trains a linear Q-function with per-trajectory clipped model deltas.
///
/// Each round samples trajectories with probability `q`; each sampled
/// trajectory runs `local_epochs` passes of mini-batch TD steps from the
/// current model, re-projecting the accumulated delta onto the `clip_norm`
/// ball after every step. The deltas are summed, divided by `q * K`, noised
/// with standard deviation `sigma * C / (q * K)` and applied.
pub fn dp_fedavg_train<R: Rng + ?Sized>(
    dataset: &Dataset,
    feature_map: FeatureMap,
    n_actions: usize,
    config: &FedAvgConfig,
    rng: &mut R,
) -> Result<LinearQ> {
    config.validate()?;
    let k = dataset.n_trajectories();
    if k == 0 {
        return Err(Error::input("cannot train on an empty dataset"));
    }
    if let Some(expected) = config.trajectory_count {
        if expected != k {
            return Err(Error::config(format!("trajectory_count {expected} but dataset has {k}")));
        }
    }
    let gamma = config.discount.unwrap_or(dataset.meta.gamma);
    let normaliser = config.sample_rate * k as f64;
    let noise_std = config.noise_multiplier * config.clip_norm / normaliser;

    let mut model = LinearQ::zeros(feature_map, n_actions);
    let mut target = model.clone();
    let dim = model.dim();
    let mut total = vec![0.0; model.weights.len()];
    let mut grad = vec![0.0; model.weights.len()];

    for round in 0..config.outer_iterations {
        if round % config.target_refresh == 0 {
            target.weights.copy_from_slice(&model.weights);
        }
        total.iter_mut().for_each(|x| *x = 0.0);
        for j in poisson_sample(k, config.sample_rate, rng) {
            let mut local = model.clone();
            for _ in 0..config.local_epochs {
                for batch in dataset.trajectories[j].steps.chunks(config.batch_size) {
                    grad.iter_mut().for_each(|x| *x = 0.0);
                    for tr in batch {
                        td_sparse(&local, &target, tr, gamma)?.add_to(&mut grad, dim, 1.0 / batch.len() as f64);
                    }
                    for (w, g) in local.weights.iter_mut().zip(&grad) {
                        *w -= config.learning_rate * g;
                    }
                    if config.clip {
                        project_delta(&mut local.weights, &model.weights, config.clip_norm);
                    }
                }
            }
            for ((t, l), m) in total.iter_mut().zip(&local.weights).zip(&model.weights) {
                *t += l - m;
            }
        }
        for t in total.iter_mut() {
            *t /= normaliser;
        }
        add_gaussian_noise(&mut total, noise_std, rng);
        for (w, d) in model.weights.iter_mut().zip(&total) {
            *w += d;
        }
    }
    if model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("DP-FedAvg training diverged".into()));
    }
    Ok(model)
}

/// `theta <- start + clip(theta - start, C)`.
fn project_delta(theta: &mut [f64], start: &[f64], clip: f64) {
    let delta: Vec<f64> = theta.iter().zip(start).map(|(t, s)| t - s).collect();
    let factor = clip_factor(l2_norm(&delta), clip);
    if factor < 1.0 {
        for ((t, s), d) in theta.iter_mut().zip(start).zip(delta) {
            *t = s + factor * d;
        }
    }
}
