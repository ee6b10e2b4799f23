//! Poisoning attacks on offline datasets, and the diff routines that check
//! an attacked dataset stays within its declared poisoning ball.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::accountant::PrivacyLevel;
use crate::error::{Error, Result};
use crate::mdp::{Dataset, Transition};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Rewards of selected trajectories resampled from Uniform[-1, 1].
    RandomReward,
    /// Rewards of selected trajectories negated.
    AdversarialReward,
    /// Selected transitions perturbed one at a time.
    TransitionFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipMode {
    /// Reward `r` becomes `b - r`.
    Reward,
    /// Action resampled uniformly from the other actions.
    Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Largest absolute reward mass first; ties to the lowest index.
    #[default]
    Targeted,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub level: PrivacyLevel,
    #[serde(rename = "r")]
    pub budget: usize,
    pub seed: u64,
    #[serde(default)]
    pub selection: Selection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<FlipMode>,
}

impl AttackSpec {
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        let (expected, limit) = match self.kind {
            AttackKind::RandomReward | AttackKind::AdversarialReward => {
                (PrivacyLevel::Trajectory, dataset.n_trajectories())
            }
            AttackKind::TransitionFlip => (PrivacyLevel::Transition, dataset.n_transitions()),
        };
        if self.level != expected {
            return Err(Error::config(format!("{:?} attacks are {}-level", self.kind, expected.as_str())));
        }
        if self.budget > limit {
            return Err(Error::config(format!("budget {} exceeds the {limit} available units", self.budget)));
        }
        if self.kind == AttackKind::TransitionFlip && self.mode.is_none() {
            return Err(Error::config("transition_flip needs a mode"));
        }
        Ok(())
    }
}

fn check_indices(indices: &[usize], len: usize, what: &str) -> Result<()> {
    let mut seen = vec![false; len];
    for &i in indices {
        if i >= len {
            return Err(Error::input(format!("{what} index {i} out of range (< {len})")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::input(format!("{what} index {i} repeated")));
        }
    }
    Ok(())
}

fn mark(mut ds: Dataset, spec: Option<&AttackSpec>) -> Result<Dataset> {
    ds.meta.attack = Some(match spec {
        Some(s) => serde_json::to_value(s)?,
        None => serde_json::Value::Bool(true),
    });
    Ok(ds)
}

/// Replaces every reward of the selected trajectories with an independent
/// Uniform[-1, 1] draw.
pub fn random_reward_attack<R: Rng + ?Sized>(dataset: &Dataset, indices: &[usize], rng: &mut R) -> Result<Dataset> {
    check_indices(indices, dataset.n_trajectories(), "trajectory")?;
    let mut out = dataset.clone();
    for &j in indices {
        for step in &mut out.trajectories[j].steps {
            step.reward = rng.random_range(-1.0..=1.0);
        }
    }
    mark(out, None)
}

/// Negates every reward of the selected trajectories.
pub fn adversarial_reward_attack(dataset: &Dataset, indices: &[usize]) -> Result<Dataset> {
    check_indices(indices, dataset.n_trajectories(), "trajectory")?;
    let mut out = dataset.clone();
    for &j in indices {
        for step in &mut out.trajectories[j].steps {
            step.reward = -step.reward;
        }
    }
    mark(out, None)
}

fn flat_index(dataset: &Dataset) -> Vec<(usize, usize)> {
    dataset
        .trajectories
        .iter()
        .enumerate()
        .flat_map(|(j, tr)| (0..tr.steps.len()).map(move |t| (j, t)))
        .collect()
}

/// Perturbs the selected transitions, addressed by their position in the
/// flattened dataset.
pub fn transition_flip_attack<R: Rng + ?Sized>(
    dataset: &Dataset,
    indices: &[usize],
    mode: FlipMode,
    n_actions: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let flat = flat_index(dataset);
    check_indices(indices, flat.len(), "transition")?;
    if mode == FlipMode::Action && n_actions < 2 {
        return Err(Error::input("action flips need at least two actions"));
    }
    let b = dataset.meta.b;
    let mut out = dataset.clone();
    for &i in indices {
        let (j, t) = flat[i];
        let step = &mut out.trajectories[j].steps[t];
        match mode {
            FlipMode::Reward => step.reward = b - step.reward,
            FlipMode::Action => {
                let pick = rng.random_range(0..n_actions - 1);
                step.action = if pick >= step.action { pick + 1 } else { pick };
            }
        }
    }
    mark(out, None)
}

fn targeted(scores: Vec<f64>, r: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&x, &y| scores[y].total_cmp(&scores[x]).then(x.cmp(&y)));
    order.truncate(r);
    order.sort_unstable();
    order
}

fn uniform<R: Rng + ?Sized>(len: usize, r: usize, rng: &mut R) -> Vec<usize> {
    let mut idx = sample(rng, len, r).into_vec();
    idx.sort_unstable();
    idx
}

pub fn select_trajectories<R: Rng + ?Sized>(dataset: &Dataset, r: usize, selection: Selection, rng: &mut R) -> Result<Vec<usize>> {
    let m = dataset.n_trajectories();
    if r > m {
        return Err(Error::input(format!("cannot select {r} of {m} trajectories")));
    }
    Ok(match selection {
        Selection::Targeted => targeted(
            dataset.trajectories.iter().map(|tr| tr.steps.iter().map(|s| s.reward.abs()).sum()).collect(),
            r,
        ),
        Selection::Uniform => uniform(m, r, rng),
    })
}

pub fn select_transitions<R: Rng + ?Sized>(dataset: &Dataset, r: usize, selection: Selection, rng: &mut R) -> Result<Vec<usize>> {
    let n = dataset.n_transitions();
    if r > n {
        return Err(Error::input(format!("cannot select {r} of {n} transitions")));
    }
    Ok(match selection {
        Selection::Targeted => targeted(dataset.transitions().map(|s| s.reward.abs()).collect(), r),
        Selection::Uniform => uniform(n, r, rng),
    })
}

/// Selects targets and applies the attack described by `spec`, recording
/// the spec in the dataset's metadata. Every output is checked against the
/// poisoning ball with the diff routines.
pub fn apply_attack(dataset: &Dataset, spec: &AttackSpec, n_actions: usize) -> Result<Dataset> {
    spec.validate(dataset)?;
    let mut rng = rng::stream(spec.seed);
    let (attacked, used) = match spec.kind {
        AttackKind::RandomReward | AttackKind::AdversarialReward => {
            let idx = select_trajectories(dataset, spec.budget, spec.selection, &mut rng)?;
            let out = if spec.kind == AttackKind::RandomReward {
                random_reward_attack(dataset, &idx, &mut rng)?
            } else {
                adversarial_reward_attack(dataset, &idx)?
            };
            let used = trajectory_diff(dataset, &out)?;
            (out, used)
        }
        AttackKind::TransitionFlip => {
            let idx = select_transitions(dataset, spec.budget, spec.selection, &mut rng)?;
            let mode = spec.mode.expect("validated");
            let out = transition_flip_attack(dataset, &idx, mode, n_actions, &mut rng)?;
            let used = transition_diff(dataset, &out)?;
            (out, used)
        }
    };
    if used > spec.budget {
        return Err(Error::Assertion(format!("attack changed {used} units with budget {}", spec.budget)));
    }
    mark(attacked, Some(spec))
}

fn same_transition(x: &Transition, y: &Transition) -> bool {
    x.traj_id == y.traj_id
        && x.t == y.t
        && x.state == y.state
        && x.action == y.action
        && x.reward == y.reward
        && x.next_state == y.next_state
        && x.done == y.done
}

fn check_structure(a: &Dataset, b: &Dataset) -> Result<()> {
    let same = a.n_trajectories() == b.n_trajectories()
        && a.trajectories.iter().zip(&b.trajectories).all(|(x, y)| x.steps.len() == y.steps.len());
    if same {
        Ok(())
    } else {
        Err(Error::input("datasets differ in trajectory structure"))
    }
}

/// Number of trajectories differing in any field of any transition.
pub fn trajectory_diff(a: &Dataset, b: &Dataset) -> Result<usize> {
    check_structure(a, b)?;
    Ok(a.trajectories
        .iter()
        .zip(&b.trajectories)
        .filter(|(x, y)| x.traj_id != y.traj_id || x.steps.iter().zip(&y.steps).any(|(s, t)| !same_transition(s, t)))
        .count())
}

/// Number of transitions differing in any field.
pub fn transition_diff(a: &Dataset, b: &Dataset) -> Result<usize> {
    check_structure(a, b)?;
    Ok(a.transitions().zip(b.transitions()).filter(|(s, t)| !same_transition(s, t)).count())
}
