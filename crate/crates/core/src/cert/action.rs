//! Action-level certificates: per-state maximum tolerable poisoning radius
//! of the majority-voted action.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::beta::beta_quantile;
use crate::accountant::{Accountant, FamilyKind, KFamily, KMember};
use crate::error::{Error, Result};
use crate::mdp::{gridworld_step, GridWorldConfig, State};
use crate::train::PolicyEnsemble;

pub const DEFAULT_R_MAX: u32 = 512;

/// Number of instances choosing each action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteCounts {
    pub counts: Vec<usize>,
    pub p: usize,
}

impl VoteCounts {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::input("vote needs at least one action"));
        }
        let p = counts.iter().sum();
        if p == 0 {
            return Err(Error::input("vote needs at least one instance"));
        }
        Ok(VoteCounts { counts, p })
    }

    /// Most voted action; ties go to the lowest index.
    pub fn top(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }
}

/// Tallies the greedy action of every instance at `state`.
pub fn vote(ensemble: &PolicyEnsemble, state: &State) -> Result<VoteCounts> {
    let mut counts = vec![0; ensemble.n_actions()];
    for a in ensemble.greedy_actions(state)? {
        counts[a] += 1;
    }
    VoteCounts::new(counts)
}

/// Simultaneous confidence bounds on the inferred scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBounds {
    pub top_action: usize,
    pub lower_top: f64,
    /// Upper bounds of the other actions, in increasing action order.
    pub upper_others: Vec<f64>,
}

impl ScoreBounds {
    pub fn max_upper(&self) -> f64 {
        self.upper_others.iter().copied().fold(0.0, f64::max)
    }
}

/// One-sided Clopper-Pearson bounds at level `alpha_conf / L` each, so that
/// all `L` hold together with probability `1 - alpha_conf`.
pub fn simuem_bounds(votes: &VoteCounts, alpha_conf: f64) -> Result<ScoreBounds> {
    if !(alpha_conf > 0.0 && alpha_conf < 1.0) {
        return Err(Error::input(format!("alpha_conf {alpha_conf} outside (0, 1)")));
    }
    let l = votes.counts.len() as f64;
    let level = alpha_conf / l;
    let p = votes.p as f64;
    let top = votes.top();
    let n_top = votes.counts[top];
    let lower_top = if n_top == votes.p {
        level.powf(1.0 / p)
    } else if n_top == 0 {
        0.0
    } else {
        beta_quantile(level, n_top as f64, p - n_top as f64 + 1.0)?
    };
    let upper_others = votes
        .counts
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &n)| {
            if n == 0 {
                Ok(1.0 - level.powf(1.0 / p))
            } else if n == votes.p {
                Ok(1.0)
            } else {
                beta_quantile(1.0 - level, n as f64 + 1.0, p - n as f64)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreBounds { top_action: top, lower_top, upper_others })
}

/// Members `(K1, K2)` chosen independently: `K1` maximizes
/// `K1^-1(lower_top)` and `K2` minimizes `K2(max upper)`. Returns them when
/// the first strictly exceeds the second.
pub fn certifying_pair(bounds: &ScoreBounds, family: &KFamily) -> Option<(KMember, KMember)> {
    let u = bounds.max_upper();
    let k1 = family
        .members
        .iter()
        .max_by(|a, b| a.inverse(bounds.lower_top).total_cmp(&b.inverse(bounds.lower_top)))?;
    let k2 = family
        .members
        .iter()
        .min_by(|a, b| a.apply(u).min(1.0).total_cmp(&b.apply(u).min(1.0)))?;
    (k1.inverse(bounds.lower_top) > k2.apply(u).min(1.0)).then_some((*k1, *k2))
}

pub fn certified_at(bounds: &ScoreBounds, family: &KFamily) -> bool {
    certifying_pair(bounds, family).is_some()
}

/// Largest `r` in `[0, r_max]` at which the bounds are certified; 0 when
/// even `r = 1` fails. The predicate is monotone in `r` (families only
/// weaken), so a binary search suffices.
pub fn max_tolerable_radius(
    bounds: &ScoreBounds,
    accountant: &Accountant,
    r_max: u32,
    delta_grid: &[f64],
    kind: FamilyKind,
) -> Result<u32> {
    if r_max == 0 {
        return Err(Error::input("r_max must be at least 1"));
    }
    let pred = |r: u32| -> Result<bool> { Ok(certified_at(bounds, &accountant.family(r, kind, delta_grid)?)) };
    if !pred(1)? {
        return Ok(0);
    }
    if pred(r_max)? {
        return Ok(r_max);
    }
    let (mut lo, mut hi) = (1, r_max);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// The certified radius of one visited state for one family kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusRecord {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub kind: FamilyKind,
    pub r_t: u32,
    /// `(K1, K2)` certifying at `r_t`; absent when `r_t = 0`.
    pub members: Option<(KMember, KMember)>,
}

/// Plays one episode with the voted action and certifies every visited
/// state under both family kinds. Records are ordered by step, ADP first.
#[allow(clippy::too_many_arguments)]
pub fn certify_episode<R: Rng + ?Sized>(
    ensemble: &PolicyEnsemble,
    env: &GridWorldConfig,
    rng: &mut R,
    accountant: &Accountant,
    alpha_conf: f64,
    r_max: u32,
    delta_grid: &[f64],
) -> Result<Vec<RadiusRecord>> {
    let mut records = Vec::new();
    let mut state = env.start_cell;
    for t in 0..env.horizon {
        let votes = vote(ensemble, &State::Cell(state))?;
        let bounds = simuem_bounds(&votes, alpha_conf)?;
        for kind in FamilyKind::BOTH {
            let r_t = max_tolerable_radius(&bounds, accountant, r_max, delta_grid, kind)?;
            let members = if r_t == 0 {
                None
            } else {
                certifying_pair(&bounds, &accountant.family(r_t, kind, delta_grid)?)
            };
            records.push(RadiusRecord { t, state, action: bounds.top_action, kind, r_t, members });
        }
        let out = gridworld_step(state, bounds.top_action, env, rng)?;
        if out.done {
            break;
        }
        state = out.next_state;
    }
    Ok(records)
}

/// Fraction of radii at least `threshold`.
pub fn stability_ratio(radii: &[u32], threshold: u32) -> Result<f64> {
    if radii.is_empty() {
        return Err(Error::input("stability ratio of an empty episode"));
    }
    Ok(radii.iter().filter(|&&r| r >= threshold).count() as f64 / radii.len() as f64)
}

/// Stability ratios at every threshold from 0 to one past the largest
/// radius. Fails with [`Error::Assertion`] if the ratio ever increases.
pub fn stability_curve(radii: &[u32]) -> Result<Vec<(u32, f64)>> {
    let top = radii.iter().copied().max().unwrap_or(0);
    let curve = (0..=top + 1)
        .map(|th| Ok((th, stability_ratio(radii, th)?)))
        .collect::<Result<Vec<_>>>()?;
    if curve.windows(2).any(|w| w[1].1 > w[0].1) {
        return Err(Error::Assertion("stability ratio increases with the threshold".into()));
    }
    Ok(curve)
}

pub const RADII_CSV_HEADER: [&str; 7] = ["episode", "t", "state", "r_t", "kind", "alpha_conf", "r_max"];
pub const STABILITY_CSV_HEADER: [&str; 3] = ["threshold", "ratio", "kind"];

pub fn write_radii_csv<W: Write>(out: W, episodes: &[Vec<RadiusRecord>], alpha_conf: f64, r_max: u32) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RADII_CSV_HEADER)?;
    for (e, records) in episodes.iter().enumerate() {
        for rec in records {
            w.write_record([
                e.to_string(),
                rec.t.to_string(),
                rec.state.to_string(),
                rec.r_t.to_string(),
                rec.kind.as_str().to_string(),
                alpha_conf.to_string(),
                r_max.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_stability_csv<W: Write>(out: W, curves: &[(FamilyKind, Vec<(u32, f64)>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STABILITY_CSV_HEADER)?;
    for (kind, curve) in curves {
        for (th, ratio) in curve {
            w.write_record([th.to_string(), ratio.to_string(), kind.as_str().to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
