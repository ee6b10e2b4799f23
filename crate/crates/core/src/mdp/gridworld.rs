use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of actions in every gridworld: up, down, left, right.
pub const N_ACTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn from_index(index: usize) -> Result<Action> {
        Action::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::input(format!("action index {index} outside [0, {N_ACTIONS})")))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn perpendicular(self) -> [Action; 2] {
        match self {
            Action::Up | Action::Down => [Action::Left, Action::Right],
            Action::Left | Action::Right => [Action::Up, Action::Down],
        }
    }
}

/// A rectangular gridworld with absorbing goal and pit cells.
///
/// Cells are indexed row-major, `cell = row * width + col`, with row 0 at the
/// top. Moving into a wall leaves the agent in place. Landing on a goal or a
/// pit ends the episode and pays that cell's reward; every other landing pays
/// `step_reward`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorldConfig {
    pub width: usize,
    pub height: usize,
    pub start_cell: usize,
    #[serde(default)]
    pub goal_cells: BTreeMap<usize, f64>,
    #[serde(default)]
    pub pit_cells: BTreeMap<usize, f64>,
    #[serde(default)]
    pub step_reward: f64,
    #[serde(default)]
    pub slip_prob: f64,
    pub horizon: usize,
    pub discount: f64,
}

impl GridWorldConfig {
    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    pub fn is_deterministic(&self) -> bool {
        self.slip_prob == 0.0
    }

    /// Stable identifier written into dataset headers and ensemble manifests.
    pub fn env_id(&self) -> String {
        format!("gridworld-{}x{}-slip{}", self.width, self.height, self.slip_prob)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("gridworld must have positive width and height"));
        }
        let n = self.n_states();
        if self.start_cell >= n {
            return Err(Error::config(format!("start cell {} outside grid of {n} cells", self.start_cell)));
        }
        for &cell in self.goal_cells.keys().chain(self.pit_cells.keys()) {
            if cell >= n {
                return Err(Error::config(format!("terminal cell {cell} outside grid of {n} cells")));
            }
        }
        if let Some(cell) = self.goal_cells.keys().find(|c| self.pit_cells.contains_key(c)) {
            return Err(Error::config(format!("cell {cell} is both a goal and a pit")));
        }
        if self.is_terminal(self.start_cell) {
            return Err(Error::config("start cell must not be terminal"));
        }
        let rewards = self
            .goal_cells
            .values()
            .chain(self.pit_cells.values())
            .chain(std::iter::once(&self.step_reward));
        if rewards.into_iter().any(|r| !r.is_finite()) {
            return Err(Error::config("rewards must be finite"));
        }
        if !(0.0..=1.0).contains(&self.slip_prob) {
            return Err(Error::config(format!("slip_prob {} outside [0, 1]", self.slip_prob)));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::config(format!("discount {} outside (0, 1]", self.discount)));
        }
        Ok(())
    }

    pub fn is_terminal(&self, cell: usize) -> bool {
        self.goal_cells.contains_key(&cell) || self.pit_cells.contains_key(&cell)
    }

    /// Reward paid for landing on `cell`.
    pub fn landing_reward(&self, cell: usize) -> f64 {
        self.goal_cells
            .get(&cell)
            .or_else(|| self.pit_cells.get(&cell))
            .copied()
            .unwrap_or(self.step_reward)
    }

    fn check_cell(&self, cell: usize) -> Result<()> {
        if cell >= self.n_states() {
            return Err(Error::input(format!("cell {cell} outside grid of {} cells", self.n_states())));
        }
        Ok(())
    }

    /// Cell reached by moving from `cell` in direction `action`, walls clamping.
    pub fn moved(&self, cell: usize, action: Action) -> usize {
        let (row, col) = (cell / self.width, cell % self.width);
        let (row, col) = match action {
            Action::Up => (row.saturating_sub(1), col),
            Action::Down => ((row + 1).min(self.height - 1), col),
            Action::Left => (row, col.saturating_sub(1)),
            Action::Right => (row, (col + 1).min(self.width - 1)),
        };
        row * self.width + col
    }

    /// Distribution over landing cells, as `(cell, probability)` pairs.
    ///
    /// Entries may repeat a cell when several directions clamp to it.
    pub fn transition_probs(&self, cell: usize, action: usize) -> Result<Vec<(usize, f64)>> {
        self.check_cell(cell)?;
        let action = Action::from_index(action)?;
        let mut out = vec![(self.moved(cell, action), 1.0 - self.slip_prob)];
        if self.slip_prob > 0.0 {
            for side in action.perpendicular() {
                out.push((self.moved(cell, side), self.slip_prob / 2.0));
            }
        }
        Ok(out)
    }

    /// Cumulative discounted reward range `[a, b]` over every trajectory of
    /// length at most `horizon`.
    ///
    /// Only the final step of a trajectory can land on a terminal cell, so the
    /// extremes are attained by `k - 1` step rewards followed by one landing
    /// reward, for some length `k`.
    pub fn reward_bounds(&self) -> (f64, f64) {
        let landings: Vec<f64> = self
            .goal_cells
            .values()
            .chain(self.pit_cells.values())
            .copied()
            .chain(std::iter::once(self.step_reward))
            .collect();
        let best_last = landings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let worst_last = landings.iter().copied().fold(f64::INFINITY, f64::min);

        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut prefix = 0.0;
        let mut weight = 1.0;
        for _ in 0..self.horizon {
            lo = lo.min(prefix + weight * worst_last);
            hi = hi.max(prefix + weight * best_last);
            prefix += weight * self.step_reward;
            weight *= self.discount;
        }
        (lo, hi)
    }
}

/// Outcome of a single environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: usize,
    pub reward: f64,
    pub done: bool,
}

/// Advances the gridworld by one step.
///
/// With probability `1 - slip_prob` the agent moves in the commanded
/// direction, otherwise in one of the two perpendicular directions chosen
/// uniformly. A deterministic world (`slip_prob == 0`) never touches `rng`.
pub fn gridworld_step<R: Rng + ?Sized>(
    state: usize,
    action: usize,
    config: &GridWorldConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    config.check_cell(state)?;
    let commanded = Action::from_index(action)?;
    let direction = if config.slip_prob > 0.0 {
        let u: f64 = rng.random();
        if u < 1.0 - config.slip_prob {
            commanded
        } else if u < 1.0 - config.slip_prob / 2.0 {
            commanded.perpendicular()[0]
        } else {
            commanded.perpendicular()[1]
        }
    } else {
        commanded
    };
    let next_state = config.moved(state, direction);
    Ok(StepOutcome {
        next_state,
        reward: config.landing_reward(next_state),
        done: config.is_terminal(next_state),
    })
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::rng::stream;

    #[test]
    fn step_into_goal_terminates() {
        let cfg = corridor();
        let out = gridworld_step(1, Action::Right.index(), &cfg, &mut stream(0)).unwrap();
        assert_eq!(out, StepOutcome { next_state: 2, reward: 1.0, done: true });
    }

    #[test]
    fn deterministic_world_ignores_rng() {
        let cfg = open_grid(0.0);
        for cell in 0..cfg.n_states() {
            for a in 0..N_ACTIONS {
                let x = gridworld_step(cell, a, &cfg, &mut stream(1)).unwrap();
                let y = gridworld_step(cell, a, &cfg, &mut stream(999)).unwrap();
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn walls_clamp() {
        let cfg = open_grid(0.0);
        assert_eq!(cfg.moved(0, Action::Up), 0);
        assert_eq!(cfg.moved(0, Action::Left), 0);
        assert_eq!(cfg.moved(8, Action::Down), 8);
        assert_eq!(cfg.moved(4, Action::Right), 5);
    }

    #[test]
    fn slip_frequency_matches_configuration() {
        let mut cfg = open_grid(0.2);
        cfg.width = 5;
        cfg.height = 5;
        cfg.goal_cells = BTreeMap::from([(24, 1.0)]);
        let interior = 12;
        let mut rng = stream(42);
        let draws = 100_000;
        let ups = (0..draws)
            .filter(|_| {
                gridworld_step(interior, Action::Up.index(), &cfg, &mut rng).unwrap().next_state == 7
            })
            .count();
        let freq = ups as f64 / draws as f64;
        assert!((freq - 0.8).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let cfg = corridor();
        assert!(matches!(gridworld_step(3, 0, &cfg, &mut stream(0)), Err(Error::InvalidInput(_))));
        assert!(matches!(gridworld_step(0, 4, &cfg, &mut stream(0)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn reward_bounds_cover_goal_and_pit() {
        let mut cfg = open_grid(0.0);
        cfg.pit_cells = BTreeMap::from([(4, -1.0)]);
        cfg.step_reward = -0.1;
        cfg.discount = 1.0;
        cfg.horizon = 3;
        let (a, b) = cfg.reward_bounds();
        // worst: two steps then the pit; best: goal on the first step
        assert!((a - (-0.2 - 1.0)).abs() < 1e-12);
        assert!((b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = corridor();
        assert!(cfg.validate().is_ok());
        cfg.start_cell = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = corridor();
        cfg.slip_prob = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = corridor();
        cfg.discount = 0.0;
        assert!(cfg.validate().is_err());
    }
}
