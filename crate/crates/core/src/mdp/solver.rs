use serde::{Deserialize, Serialize};

use super::gridworld::GridWorldConfig;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Tabular action values, row-major `|S| x |A|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        QTable { n_states, n_actions, values: vec![0.0; n_states * n_actions] }
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.n_actions + action]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn greedy(&self, state: usize) -> usize {
        argmax(self.row(state))
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One Bellman backup of `q` under the gridworld dynamics.
///
/// Terminal cells keep value zero: an episode never acts from them.
pub fn bellman_backup(config: &GridWorldConfig, q: &QTable) -> QTable {
    let mut next = QTable::zeros(q.n_states, q.n_actions);
    for s in 0..q.n_states {
        if config.is_terminal(s) {
            continue;
        }
        for a in 0..q.n_actions {
            let probs = config.transition_probs(s, a).expect("indices in range");
            next.values[s * q.n_actions + a] = probs
                .iter()
                .map(|&(s2, p)| {
                    let cont = if config.is_terminal(s2) { 0.0 } else { config.discount * q.max_value(s2) };
                    p * (config.landing_reward(s2) + cont)
                })
                .sum();
        }
    }
    next
}

/// Finite-horizon value iteration.
///
/// Applies up to `horizon` backups from the zero table, so the result is the
/// action value with `horizon` steps to go. Stops early once a backup moves
/// no entry by more than `tol`, in which case the table is a fixed point of
/// the backup to within `tol`.
pub fn value_iteration(config: &GridWorldConfig, tol: f64) -> QTable {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut q = QTable::zeros(config.n_states(), config.n_actions());
    for _ in 0..config.horizon {
        let next = bellman_backup(config, &q);
        let change = next.sup_distance(&q);
        q = next;
        if change <= tol {
            break;
        }
    }
    q
}
