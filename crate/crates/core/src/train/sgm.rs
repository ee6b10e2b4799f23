//! Transition-level private training with the sampled Gaussian mechanism.

use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use super::linear::{clip_factor, td_sparse, FeatureMap, LinearQ};
use crate::error::{Error, Result};
use crate::mdp::Dataset;

fn default_refresh() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgmConfig {
    /// Poisson inclusion probability of each transition per iteration.
    pub sample_rate: f64,
    pub noise_multiplier: f64,
    pub clip_norm: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Falls back to the dataset's discount when absent.
    #[serde(default)]
    pub discount: Option<f64>,
    #[serde(default = "default_refresh")]
    pub target_refresh: usize,
}

impl SgmConfig {
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
        if self.iterations == 0 || self.target_refresh == 0 {
            return Err(Error::config("iterations and target_refresh must be at least 1"));
        }
        Ok(())
    }
}

/// Indices selected by independent Bernoulli(`q`) draws over `0..n`.
///
/// Walks geometric gaps between successes, so the cost is proportional to
/// the number selected rather than to `n`.
pub fn poisson_sample<R: Rng + ?Sized>(n: usize, q: f64, rng: &mut R) -> Vec<usize> {
    if q >= 1.0 {
        return (0..n).collect();
    }
    if q <= 0.0 || n == 0 {
        return Vec::new();
    }
    let gaps = Geometric::new(q).expect("q in (0, 1)");
    let mut out = Vec::new();
    let mut pos: u64 = 0;
    loop {
        pos = pos.saturating_add(gaps.sample(rng));
        if pos >= n as u64 {
            break;
        }
        out.push(pos as usize);
        pos += 1;
    }
    out
}

pub(crate) fn add_gaussian_noise<R: Rng + ?Sized>(v: &mut [f64], std: f64, rng: &mut R) {
    if std > 0.0 {
        for x in v {
            let z: f64 = StandardNormal.sample(rng);
            *x += std * z;
        }
    }
}

/// Trains a linear Q-function with DP-SGD over individual transitions.
///
/// Each iteration Poisson-samples transitions, clips every per-transition
/// TD gradient to `clip_norm`, adds `N(0, (sigma * C)^2)` noise to the sum,
/// divides by the expected batch size `q * N` and takes a step. The bootstrap
/// target is a frozen copy of the model refreshed every `target_refresh`
/// iterations. An empty batch still applies the noise.
pub fn sgm_train<R: Rng + ?Sized>(
    dataset: &Dataset,
    feature_map: FeatureMap,
    n_actions: usize,
    config: &SgmConfig,
    rng: &mut R,
) -> Result<LinearQ> {
    config.validate()?;
    let transitions = dataset.flat_transitions();
    if transitions.is_empty() {
        return Err(Error::input("cannot train on an empty dataset"));
    }
    let gamma = config.discount.unwrap_or(dataset.meta.gamma);
    let n = transitions.len();
    let normaliser = config.sample_rate * n as f64;
    let noise_std = config.noise_multiplier * config.clip_norm;

    let mut model = LinearQ::zeros(feature_map, n_actions);
    let mut target = model.clone();
    let dim = model.dim();
    let mut sum = vec![0.0; model.weights.len()];

    for iter in 0..config.iterations {
        if iter % config.target_refresh == 0 {
            target.weights.copy_from_slice(&model.weights);
        }
        sum.iter_mut().for_each(|x| *x = 0.0);
        for i in poisson_sample(n, config.sample_rate, rng) {
            let g = td_sparse(&model, &target, transitions[i], gamma)?;
            let factor = clip_factor(g.norm(), config.clip_norm);
            g.add_to(&mut sum, dim, factor);
        }
        add_gaussian_noise(&mut sum, noise_std, rng);
        let step = config.learning_rate / normaliser;
        for (w, g) in model.weights.iter_mut().zip(&sum) {
            *w -= step * g;
        }
    }
    if model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("SGM training diverged".into()));
    }
    Ok(model)
}
