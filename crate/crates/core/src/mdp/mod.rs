//! Episodic finite-horizon MDPs: gridworld dynamics, rollouts, offline
//! datasets and an exact value-iteration oracle.

pub mod dataset;
pub mod gridworld;
pub mod rollout;
pub mod solver;

pub use dataset::{cumulative_reward, Dataset, DatasetMeta, State, Trajectory, Transition};
pub use gridworld::{gridworld_step, Action, GridWorldConfig, StepOutcome, N_ACTIONS};
pub use rollout::{generate_dataset, rollout, BehaviorPolicy};
pub use solver::{argmax, bellman_backup, value_iteration, QTable};
