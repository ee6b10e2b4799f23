use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, DatasetMeta, State, Trajectory, Transition};
use super::gridworld::{gridworld_step, GridWorldConfig};
use super::solver::{value_iteration, QTable};
use crate::error::{Error, Result};

/// Plays one episode from the start cell.
///
/// The policy receives the current cell and the episode rng. The returned
/// trajectory has at most `horizon` steps and stops at the first terminal
/// landing.
pub fn rollout<R, P>(config: &GridWorldConfig, mut policy: P, rng: &mut R, horizon: usize) -> Result<Trajectory>
where
    R: Rng + ?Sized,
    P: FnMut(usize, &mut R) -> usize,
{
    if horizon == 0 {
        return Err(Error::input("rollout horizon must be at least 1"));
    }
    let mut state = config.start_cell;
    let mut steps = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let action = policy(state, rng);
        if action >= config.n_actions() {
            return Err(Error::input(format!("policy returned action {action} at cell {state}")));
        }
        let out = gridworld_step(state, action, config, rng)?;
        steps.push(Transition {
            traj_id: 0,
            t,
            state: State::Cell(state),
            action,
            reward: out.reward,
            next_state: State::Cell(out.next_state),
            done: out.done,
        });
        if out.done {
            break;
        }
        state = out.next_state;
    }
    Ok(Trajectory { traj_id: 0, steps })
}

/// Behaviour policy used to collect offline data: epsilon-greedy over the
/// optimal action values of the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorPolicy {
    pub epsilon: f64,
}

impl Default for BehaviorPolicy {
    fn default() -> Self {
        BehaviorPolicy { epsilon: 0.3 }
    }
}

impl BehaviorPolicy {
    pub fn act<R: Rng + ?Sized>(&self, q: &QTable, state: usize, rng: &mut R) -> usize {
        if rng.random::<f64>() < self.epsilon {
            rng.random_range(0..q.n_actions)
        } else {
            q.greedy(state)
        }
    }
}

/// Collects `m` behaviour-policy episodes into a dataset.
pub fn generate_dataset<R: Rng + ?Sized>(
    config: &GridWorldConfig,
    behavior: &BehaviorPolicy,
    m: usize,
    rng: &mut R,
) -> Result<Dataset> {
    config.validate()?;
    if m == 0 {
        return Err(Error::input("dataset needs at least one trajectory"));
    }
    if !(0.0..=1.0).contains(&behavior.epsilon) {
        return Err(Error::input(format!("exploration rate {} outside [0, 1]", behavior.epsilon)));
    }
    let q = value_iteration(config, 1e-10);
    let mut trajectories = Vec::with_capacity(m);
    for j in 0..m {
        let mut traj = rollout(config, |s, r: &mut R| behavior.act(&q, s, r), rng, config.horizon)?;
        traj.traj_id = j;
        for step in &mut traj.steps {
            step.traj_id = j;
        }
        trajectories.push(traj);
    }
    let (a, b) = config.reward_bounds();
    Dataset::new(
        trajectories,
        DatasetMeta { env: config.env_id(), horizon: config.horizon, gamma: config.discount, a, b, attack: None },
    )
}
