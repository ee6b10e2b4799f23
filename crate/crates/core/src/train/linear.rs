use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{argmax, State, Transition};

/// Maps a state to a sparse feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureMap {
    /// Tabular indicator features over grid cells.
    OneHot { n_states: usize },
    /// The raw state vector, for real-vector states.
    Raw { dim: usize },
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        match *self {
            FeatureMap::OneHot { n_states } => n_states,
            FeatureMap::Raw { dim } => dim,
        }
    }

    pub fn id(&self) -> String {
        match *self {
            FeatureMap::OneHot { n_states } => format!("one-hot:{n_states}"),
            FeatureMap::Raw { dim } => format!("raw:{dim}"),
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        let (kind, n) = id
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("feature map id {id:?}")))?;
        let n: usize = n.parse().map_err(|_| Error::Format(format!("feature map id {id:?}")))?;
        match kind {
            "one-hot" => Ok(FeatureMap::OneHot { n_states: n }),
            "raw" => Ok(FeatureMap::Raw { dim: n }),
            _ => Err(Error::Format(format!("unknown feature map {kind:?}"))),
        }
    }

    /// Non-zero features of `state` as `(index, value)` pairs.
    pub fn features(&self, state: &State) -> Result<Vec<(usize, f64)>> {
        match (*self, state) {
            (FeatureMap::OneHot { n_states }, State::Cell(c)) if *c < n_states => Ok(vec![(*c, 1.0)]),
            (FeatureMap::Raw { dim }, State::Vector(v)) if v.len() == dim => {
                Ok(v.iter().copied().enumerate().filter(|(_, x)| *x != 0.0).collect())
            }
            _ => Err(Error::input(format!("state {state:?} incompatible with feature map {}", self.id()))),
        }
    }
}

/// Q-function linear in state features, one weight block per action.
///
/// `q(s, a) = <w[a * dim .. (a + 1) * dim], phi(s)>`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQ {
    pub feature_map: FeatureMap,
    pub n_actions: usize,
    pub weights: Vec<f64>,
}

impl LinearQ {
    pub fn zeros(feature_map: FeatureMap, n_actions: usize) -> Self {
        LinearQ { feature_map, n_actions, weights: vec![0.0; feature_map.dim() * n_actions] }
    }

    pub fn dim(&self) -> usize {
        self.feature_map.dim()
    }

    fn value_from(&self, feats: &[(usize, f64)], action: usize) -> f64 {
        let block = &self.weights[action * self.dim()..(action + 1) * self.dim()];
        feats.iter().map(|&(j, x)| block[j] * x).sum()
    }

    pub fn q_value(&self, state: &State, action: usize) -> Result<f64> {
        if action >= self.n_actions {
            return Err(Error::input(format!("action {action} outside [0, {})", self.n_actions)));
        }
        Ok(self.value_from(&self.feature_map.features(state)?, action))
    }

    pub fn q_values(&self, state: &State) -> Result<Vec<f64>> {
        let feats = self.feature_map.features(state)?;
        Ok((0..self.n_actions).map(|a| self.value_from(&feats, a)).collect())
    }

    /// Greedy action; ties go to the lowest index.
    pub fn greedy(&self, state: &State) -> Result<usize> {
        Ok(argmax(&self.q_values(state)?))
    }
}

/// Sparse form of a per-transition TD gradient: the gradient is
/// `error * phi(s)` inside the block of the taken action and zero elsewhere.
pub(crate) struct SparseGrad {
    pub action: usize,
    pub error: f64,
    pub feats: Vec<(usize, f64)>,
}

impl SparseGrad {
    pub fn norm(&self) -> f64 {
        self.error.abs() * self.feats.iter().map(|(_, x)| x * x).sum::<f64>().sqrt()
    }

    /// Adds `scale * gradient` into a dense accumulator.
    pub fn add_to(&self, dense: &mut [f64], dim: usize, scale: f64) {
        let offset = self.action * dim;
        for &(j, x) in &self.feats {
            dense[offset + j] += scale * self.error * x;
        }
    }
}

pub(crate) fn td_sparse(model: &LinearQ, target: &LinearQ, tr: &Transition, gamma: f64) -> Result<SparseGrad> {
    let feats = model.feature_map.features(&tr.state)?;
    if tr.action >= model.n_actions {
        return Err(Error::input(format!("transition action {} outside model", tr.action)));
    }
    let bootstrap = if tr.done {
        0.0
    } else {
        target.q_values(&tr.next_state)?.into_iter().fold(f64::NEG_INFINITY, f64::max)
    };
    let y = tr.reward + gamma * bootstrap;
    let error = model.value_from(&feats, tr.action) - y;
    Ok(SparseGrad { action: tr.action, error, feats })
}

/// Gradient of the one-sample semi-gradient TD loss `0.5 * (q(s, a) - y)^2`
/// with `y = r + gamma * (1 - done) * max_a' q_target(s', a')` held constant.
pub fn td_gradient(model: &LinearQ, target: &LinearQ, transition: &Transition, gamma: f64) -> Result<Vec<f64>> {
    let sparse = td_sparse(model, target, transition, gamma)?;
    let mut g = vec![0.0; model.weights.len()];
    sparse.add_to(&mut g, model.dim(), 1.0);
    Ok(g)
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `g` by `1 / max(1, |g| / clip)`.
pub fn clip_gradient(g: &[f64], clip: f64) -> Vec<f64> {
    let factor = clip_factor(l2_norm(g), clip);
    g.iter().map(|x| x * factor).collect()
}

pub(crate) fn clip_factor(norm: f64, clip: f64) -> f64 {
    1.0 / f64::max(1.0, norm / clip)
}
