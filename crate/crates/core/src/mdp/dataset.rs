use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment state: a grid cell index, or a real feature vector for
/// continuous-state extensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum State {
    Cell(usize),
    Vector(Vec<f64>),
}

impl State {
    pub fn cell(&self) -> Option<usize> {
        match self {
            State::Cell(c) => Some(*c),
            State::Vector(_) => None,
        }
    }
}

impl From<usize> for State {
    fn from(cell: usize) -> Self {
        State::Cell(cell)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub traj_id: usize,
    pub t: usize,
    pub state: State,
    pub action: usize,
    pub reward: f64,
    pub next_state: State,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub traj_id: usize,
    pub steps: Vec<Transition>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rewards(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.reward)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::input(format!("trajectory {} is empty", self.traj_id)));
        }
        for (i, step) in self.steps.iter().enumerate() {
            if step.t != i || step.traj_id != self.traj_id {
                return Err(Error::input(format!(
                    "trajectory {} step {i} carries (traj {}, t {})",
                    self.traj_id, step.traj_id, step.t
                )));
            }
            if !step.reward.is_finite() {
                return Err(Error::input(format!("non-finite reward in trajectory {}", self.traj_id)));
            }
            if step.done && i + 1 != self.steps.len() {
                return Err(Error::input(format!("trajectory {} continues after done", self.traj_id)));
            }
            if let Some(next) = self.steps.get(i + 1) {
                if next.state != step.next_state {
                    return Err(Error::input(format!(
                        "trajectory {} breaks the state chain at t={i}",
                        self.traj_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Discounted return `sum_t gamma^t r_t` of one trajectory.
pub fn cumulative_reward(trajectory: &Trajectory, gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut weight = 1.0;
    for r in trajectory.rewards() {
        total += weight * r;
        weight *= gamma;
    }
    total
}

/// Dataset-level metadata; `M` and `N` are derived from the trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub env: String,
    pub horizon: usize,
    pub gamma: f64,
    /// Lower bound on cumulative reward.
    pub a: f64,
    /// Upper bound on cumulative reward.
    pub b: f64,
    /// Description of the poisoning applied, if any.
    pub attack: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub meta: DatasetMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    env: String,
    #[serde(rename = "H")]
    horizon: usize,
    gamma: f64,
    a: f64,
    b: f64,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "N")]
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attack: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    traj: usize,
    t: usize,
    s: State,
    a: usize,
    r: f64,
    s2: State,
    done: bool,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>, meta: DatasetMeta) -> Result<Self> {
        let ds = Dataset { trajectories, meta };
        ds.validate()?;
        Ok(ds)
    }

    /// Number of trajectories `M`.
    pub fn n_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    /// Number of transitions `N`.
    pub fn n_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> + '_ {
        self.trajectories.iter().flat_map(|t| t.steps.iter())
    }

    pub fn flat_transitions(&self) -> Vec<&Transition> {
        self.transitions().collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories.is_empty() {
            return Err(Error::input("dataset must contain at least one trajectory"));
        }
        if self.meta.a > self.meta.b {
            return Err(Error::input(format!("reward bounds [{}, {}] are inverted", self.meta.a, self.meta.b)));
        }
        for traj in &self.trajectories {
            traj.validate()?;
            if traj.len() > self.meta.horizon {
                return Err(Error::input(format!(
                    "trajectory {} longer than horizon {}",
                    traj.traj_id, self.meta.horizon
                )));
            }
        }
        // Poisoned datasets may carry rewards outside the clean environment's range.
        if self.meta.attack.is_none() {
            if let Some(step) = self.transitions().find(|s| s.reward < self.meta.a || s.reward > self.meta.b) {
                return Err(Error::input(format!(
                    "reward {} at (traj {}, t {}) outside [{}, {}]",
                    step.reward, step.traj_id, step.t, self.meta.a, self.meta.b
                )));
            }
        }
        Ok(())
    }

    /// Serialises to the JSON-lines format: one header line with the
    /// metadata, then one line per transition in trajectory order.
    pub fn to_jsonl(&self) -> Result<String> {
        let header = Header {
            env: self.meta.env.clone(),
            horizon: self.meta.horizon,
            gamma: self.meta.gamma,
            a: self.meta.a,
            b: self.meta.b,
            m: self.n_trajectories(),
            n: self.n_transitions(),
            attack: self.meta.attack.clone(),
        };
        let mut out = serde_json::to_string(&header)?;
        out.push('\n');
        for step in self.transitions() {
            let rec = Record {
                traj: step.traj_id,
                t: step.t,
                s: step.state.clone(),
                a: step.action,
                r: step.reward,
                s2: step.next_state.clone(),
                done: step.done,
            };
            writeln!(out, "{}", serde_json::to_string(&rec)?).expect("writing to a String");
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| Error::Format("empty dataset file".into()))?;
        let header: Header =
            serde_json::from_str(first).map_err(|e| Error::Format(format!("dataset header: {e}")))?;

        let mut trajectories: Vec<Trajectory> = Vec::new();
        for (lineno, line) in lines {
            let rec: Record = serde_json::from_str(line)
                .map_err(|e| Error::Format(format!("dataset line {}: {e}", lineno + 1)))?;
            let step = Transition {
                traj_id: rec.traj,
                t: rec.t,
                state: rec.s,
                action: rec.a,
                reward: rec.r,
                next_state: rec.s2,
                done: rec.done,
            };
            match trajectories.last_mut() {
                Some(traj) if traj.traj_id == step.traj_id => traj.steps.push(step),
                _ => trajectories.push(Trajectory { traj_id: step.traj_id, steps: vec![step] }),
            }
        }
        let ds = Dataset {
            trajectories,
            meta: DatasetMeta {
                env: header.env,
                horizon: header.horizon,
                gamma: header.gamma,
                a: header.a,
                b: header.b,
                attack: header.attack,
            },
        };
        if ds.n_trajectories() != header.m || ds.n_transitions() != header.n {
            return Err(Error::Format(format!(
                "header declares M={} N={}, file holds M={} N={}",
                header.m,
                header.n,
                ds.n_trajectories(),
                ds.n_transitions()
            )));
        }
        ds.validate()?;
        Ok(ds)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        crate::harness::io::write_atomic(path, self.to_jsonl()?.as_bytes())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        Self::from_jsonl(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(id: usize, rewards: &[f64]) -> Trajectory {
        let steps = rewards
            .iter()
            .enumerate()
            .map(|(t, &r)| Transition {
                traj_id: id,
                t,
                state: State::Cell(t),
                action: 0,
                reward: r,
                next_state: State::Cell(t + 1),
                done: t + 1 == rewards.len(),
            })
            .collect();
        Trajectory { traj_id: id, steps }
    }

    fn meta() -> DatasetMeta {
        DatasetMeta { env: "test".into(), horizon: 10, gamma: 1.0, a: 0.0, b: 3.0, attack: None }
    }

    #[test]
    fn cumulative_reward_direct_sums() {
        assert_eq!(cumulative_reward(&traj(0, &[1.0, 0.0, 1.0]), 1.0), 2.0);
        assert_eq!(cumulative_reward(&traj(0, &[1.0, 1.0]), 0.5), 1.5);
    }

    #[test]
    fn counts_and_round_trip() {
        let ds = Dataset::new(vec![traj(0, &[0.0, 1.0]), traj(1, &[1.0])], meta()).unwrap();
        assert_eq!(ds.n_trajectories(), 2);
        assert_eq!(ds.n_transitions(), 3);
        let text = ds.to_jsonl().unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first, r#"{"env":"test","H":10,"gamma":1.0,"a":0.0,"b":3.0,"M":2,"N":3}"#);
        let second = text.lines().nth(1).unwrap();
        assert_eq!(second, r#"{"traj":0,"t":0,"s":0,"a":0,"r":0.0,"s2":1,"done":false}"#);
        assert_eq!(Dataset::from_jsonl(&text).unwrap(), ds);
    }

    #[test]
    fn vector_states_serialise_as_arrays() {
        let mut t = traj(0, &[1.0]);
        t.steps[0].state = State::Vector(vec![0.5, -1.0]);
        t.steps[0].next_state = State::Vector(vec![0.25, 2.0]);
        let ds = Dataset::new(vec![t], meta()).unwrap();
        let text = ds.to_jsonl().unwrap();
        assert!(text.contains(r#""s":[0.5,-1.0]"#));
        assert_eq!(Dataset::from_jsonl(&text).unwrap(), ds);
    }

    #[test]
    fn header_mismatch_is_a_format_error() {
        let ds = Dataset::new(vec![traj(0, &[1.0])], meta()).unwrap();
        let text = ds.to_jsonl().unwrap().replace(r#""N":1"#, r#""N":2"#);
        assert!(matches!(Dataset::from_jsonl(&text), Err(Error::Format(_))));
    }

    #[test]
    fn invariants_enforced() {
        assert!(Dataset::new(vec![], meta()).is_err());
        let mut bad = traj(0, &[1.0, 1.0]);
        bad.steps[0].done = true;
        assert!(Dataset::new(vec![bad], meta()).is_err());
        let mut broken = traj(0, &[1.0, 1.0]);
        broken.steps[1].state = State::Cell(7);
        assert!(Dataset::new(vec![broken], meta()).is_err());
        assert!(Dataset::new(vec![traj(0, &[5.0])], meta()).is_err());
        let mut attacked = meta();
        attacked.attack = Some(serde_json::json!({"kind": "test"}));
        assert!(Dataset::new(vec![traj(0, &[5.0])], attacked).is_ok());
    }
}
