//! Policy-level certificates: a confidence lower bound on the expected
//! cumulative reward of the clean randomized policy, pushed through every
//! outcome guarantee available at radius `r`.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{Accountant, FamilyKind, KFamily, KMember};
use crate::error::{Error, Result};
use crate::mdp::{cumulative_reward, rollout, GridWorldConfig, State};
use crate::rng;
use crate::train::PolicyEnsemble;

/// Slack for returns that leave `[a, b]` by accumulated rounding only.
const RANGE_SLACK: f64 = 1e-9;

/// Sorted sample of cumulative rewards with its support `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    samples: Vec<f64>,
    a: f64,
    b: f64,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>, a: f64, b: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::input("empirical CDF needs at least one sample"));
        }
        if !(a <= b) {
            return Err(Error::input(format!("support [{a}, {b}] is empty")));
        }
        for x in &mut samples {
            if !(*x >= a - RANGE_SLACK && *x <= b + RANGE_SLACK) {
                return Err(Error::input(format!("sample {x} outside [{a}, {b}]")));
            }
            *x = x.clamp(a, b);
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { samples, a, b })
    }

    pub fn m(&self) -> usize {
        self.samples.len()
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.m() as f64
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        self.samples.partition_point(|&s| s <= x) as f64 / self.m() as f64
    }

    /// `int_lo^hi f(F(x)) dx` in closed form over the steps of the CDF.
    fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let m = self.m() as f64;
        let mut k = self.samples.partition_point(|&s| s <= lo);
        let mut prev = lo;
        let mut acc = 0.0;
        while k < self.samples.len() && self.samples[k] < hi {
            let s = self.samples[k];
            acc += (s - prev) * f(k as f64 / m);
            prev = s;
            k += 1;
            while k < self.samples.len() && self.samples[k] == s {
                k += 1;
            }
        }
        acc + (hi - prev) * f(k as f64 / m)
    }
}

/// `sqrt(ln(2 / delta_conf) / (2 m))`: the half-width of a DKW band holding
/// with probability `1 - delta_conf`.
pub fn dkw_epsilon(m: usize, delta_conf: f64) -> Result<f64> {
    if m == 0 || !(delta_conf > 0.0 && delta_conf < 1.0) {
        return Err(Error::input(format!("dkw_epsilon(m={m}, delta={delta_conf}) outside domain")));
    }
    Ok(((2.0 / delta_conf).ln() / (2.0 * m as f64)).sqrt())
}

/// Lower confidence bound on `E[max(X, 0)]`:
/// `int_0^b clamp(1 - F(x) - eps, 0, 1) dx`.
pub fn j_lower_positive(cdf: &EmpiricalCdf, eps: f64) -> f64 {
    cdf.integrate(0.0, cdf.b.max(0.0), |f| (1.0 - f - eps).clamp(0.0, 1.0))
}

/// Upper confidence bound on `E[max(-X, 0)]`:
/// `int_a^0 clamp(F(u) + eps, 0, 1) du`.
pub fn j_upper_negative(cdf: &EmpiricalCdf, eps: f64) -> f64 {
    cdf.integrate(cdf.a.min(0.0), 0.0, |f| (f + eps).clamp(0.0, 1.0))
}

/// Lower confidence bound on `E[X]` for `X` supported on `[0, b]`.
pub fn j_lower_clean(cdf: &EmpiricalCdf, eps: f64) -> Result<f64> {
    if cdf.a < 0.0 {
        return Err(Error::input(format!("j_lower_clean needs support in [0, b], got a = {}", cdf.a)));
    }
    Ok(j_lower_positive(cdf, eps))
}

/// `max(0, e^-eps (J - b delta))`.
pub fn certify_policy_adp(j_lower: f64, b: f64, eps: f64, delta: f64) -> f64 {
    ((-eps).exp() * (j_lower - b * delta)).max(0.0)
}

/// `e^-eps (b^(-1/alpha) J)^(alpha / (alpha - 1))`.
pub fn certify_policy_rdp(j_lower: f64, b: f64, eps: f64, alpha: f64) -> f64 {
    let base = b.powf(-1.0 / alpha) * j_lower.max(0.0);
    (-eps).exp() * base.powf(alpha / (alpha - 1.0))
}

/// Bound for rewards in `[a, b]` with `a < 0 < b`, combining a lower bound on
/// `E[max(X, 0)]` and an upper bound on `E[max(-X, 0)]`. May be negative.
pub fn certify_policy_real(j_plus_lower: f64, j_minus_upper: f64, a: f64, b: f64, member: &KMember) -> f64 {
    match *member {
        KMember::Adp { eps, delta } => {
            (-eps).exp() * (j_plus_lower - b * delta) - (eps.exp() * j_minus_upper - a * delta)
        }
        KMember::Rdp { alpha, eps } => {
            let gain = (-eps).exp() * (b.powf(-1.0 / alpha) * j_plus_lower).powf(alpha / (alpha - 1.0));
            let loss = (-a).powf(1.0 / alpha) * (eps.exp() * j_minus_upper).powf((alpha - 1.0) / alpha);
            gain - loss
        }
    }
}

/// The clean-policy confidence bound and what is needed to push it through a
/// family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleanBound {
    pub a: f64,
    pub b: f64,
    pub m: usize,
    pub delta_conf: f64,
    pub eps_dkw: f64,
    /// Lower bound on `E[max(X, 0)]`.
    pub j_plus: f64,
    /// Upper bound on `E[max(-X, 0)]`; zero for non-negative rewards.
    pub j_minus: f64,
}

impl CleanBound {
    pub fn from_cdf(cdf: &EmpiricalCdf, delta_conf: f64) -> Result<Self> {
        let eps_dkw = dkw_epsilon(cdf.m(), delta_conf)?;
        let real = cdf.a < 0.0;
        Ok(CleanBound {
            a: cdf.a.min(0.0),
            b: cdf.b,
            m: cdf.m(),
            delta_conf,
            eps_dkw,
            j_plus: j_lower_positive(cdf, eps_dkw),
            j_minus: if real { j_upper_negative(cdf, eps_dkw) } else { 0.0 },
        })
    }

    pub fn is_real_valued(&self) -> bool {
        self.a < 0.0
    }

    /// The unpoisoned bound.
    pub fn j_lower(&self) -> f64 {
        self.j_plus - self.j_minus
    }

    pub fn certify(&self, member: &KMember) -> f64 {
        if self.is_real_valued() {
            return certify_policy_real(self.j_plus, self.j_minus, self.a, self.b, member);
        }
        match *member {
            KMember::Adp { eps, delta } => certify_policy_adp(self.j_plus, self.b, eps, delta),
            KMember::Rdp { alpha, eps } => certify_policy_rdp(self.j_plus, self.b, eps, alpha),
        }
    }

    /// Best certificate over a family and the member attaining it.
    pub fn best(&self, family: &KFamily) -> Option<(f64, KMember)> {
        family
            .members
            .iter()
            .map(|m| (self.certify(m), *m))
            .max_by(|x, y| x.0.total_cmp(&y.0).then(y.1.eps().total_cmp(&x.1.eps())))
    }
}

/// One row of a certification curve. `j_certified` is `None` when no
/// guarantee exists at this radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyCertRow {
    pub r: u32,
    pub kind: FamilyKind,
    pub j_lower_clean: f64,
    pub j_certified: Option<f64>,
    pub member: Option<KMember>,
    pub delta_conf: f64,
    pub m: usize,
}

pub const DEFAULT_R_RANGE: [u32; 9] = [0, 1, 2, 5, 10, 20, 50, 100, 200];
pub const DEFAULT_DELTA_GRID: [f64; 3] = [1e-5, 1e-4, 1e-3];

/// Certificate rows for both kinds at every radius, sorted by kind then `r`.
/// Radius 0 reports the clean bound. Fails with [`Error::Assertion`] when
/// the curve is not non-increasing in `r` or exceeds the clean bound.
pub fn certify_curve(
    clean: &CleanBound,
    accountant: &Accountant,
    r_range: &[u32],
    delta_grid: &[f64],
) -> Result<Vec<PolicyCertRow>> {
    let mut radii = r_range.to_vec();
    radii.sort_unstable();
    radii.dedup();
    let mut rows = Vec::new();
    for kind in FamilyKind::BOTH {
        for &r in &radii {
            let (j_certified, member) = if r == 0 {
                (Some(clean.j_lower()), None)
            } else {
                match clean.best(&accountant.family(r, kind, delta_grid)?) {
                    Some((j, m)) => (Some(j), Some(m)),
                    None => (None, None),
                }
            };
            rows.push(PolicyCertRow {
                r,
                kind,
                j_lower_clean: clean.j_lower(),
                j_certified,
                member,
                delta_conf: clean.delta_conf,
                m: clean.m,
            });
        }
    }
    check_curve(&rows)?;
    Ok(rows)
}

/// Runtime checks run on every curve: each certificate is at most the clean
/// bound and certificates never increase with `r`.
pub fn check_curve(rows: &[PolicyCertRow]) -> Result<()> {
    const TOL: f64 = 1e-12;
    for kind in FamilyKind::BOTH {
        let mut prev: Option<(u32, Option<f64>)> = None;
        let mut sorted: Vec<&PolicyCertRow> = rows.iter().filter(|r| r.kind == kind).collect();
        sorted.sort_by_key(|r| r.r);
        for row in sorted {
            if let Some(j) = row.j_certified {
                if j > row.j_lower_clean + TOL {
                    return Err(Error::Assertion(format!(
                        "{} certificate {j} at r={} exceeds the clean bound {}",
                        kind.as_str(),
                        row.r,
                        row.j_lower_clean
                    )));
                }
            }
            if let Some((pr, pj)) = prev {
                let increased = match (pj, row.j_certified) {
                    (Some(a), Some(b)) => b > a + TOL,
                    (None, Some(_)) => true,
                    _ => false,
                };
                if increased {
                    return Err(Error::Assertion(format!(
                        "{} certificate increases from r={pr} to r={}",
                        kind.as_str(),
                        row.r
                    )));
                }
            }
            prev = Some((row.r, row.j_certified));
        }
    }
    Ok(())
}

/// Discounted returns of `rollouts_per_instance * p` episodes of the
/// randomized policy. Episode `i` follows instance `i mod p` and draws its
/// environment noise from `child_seed(seed, i)`.
pub fn collect_returns(
    ensemble: &PolicyEnsemble,
    env: &GridWorldConfig,
    rollouts_per_instance: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let p = ensemble.p();
    let m = p * rollouts_per_instance;
    (0..m)
        .into_par_iter()
        .map(|i| {
            let model = &ensemble.instances[i % p];
            let mut env_rng = rng::child_stream(seed, i as u64);
            let mut failure = None;
            let traj = rollout(
                env,
                |cell, _: &mut rng::StreamRng| match model.greedy(&State::Cell(cell)) {
                    Ok(a) => a,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0
                    }
                },
                &mut env_rng,
                env.horizon,
            )?;
            if let Some(e) = failure {
                return Err(e);
            }
            Ok(cumulative_reward(&traj, env.discount))
        })
        .collect()
}

/// A certification curve together with the clean bound it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCurve {
    pub clean: CleanBound,
    pub rows: Vec<PolicyCertRow>,
}

/// Rolls out the ensemble, builds the DKW bound on the clean return and
/// certifies it at every radius in `r_range` with both family kinds.
pub fn policy_cert_curve(
    ensemble: &PolicyEnsemble,
    env: &GridWorldConfig,
    rollouts_per_instance: usize,
    r_range: &[u32],
    delta_conf: f64,
    delta_grid: &[f64],
    seed: u64,
) -> Result<PolicyCurve> {
    if rollouts_per_instance == 0 {
        return Err(Error::input("rollouts_per_instance must be at least 1"));
    }
    let returns = collect_returns(ensemble, env, rollouts_per_instance, seed)?;
    let (a, b) = env.reward_bounds();
    let cdf = EmpiricalCdf::new(returns, a.min(0.0), b)?;
    let clean = CleanBound::from_cdf(&cdf, delta_conf)?;
    let accountant = Accountant::new(ensemble.meta.accountant_inputs())?;
    let rows = certify_curve(&clean, &accountant, r_range, delta_grid)?;
    Ok(PolicyCurve { clean, rows })
}

pub const POLICY_CSV_HEADER: [&str; 8] =
    ["r", "kind", "J_lower_clean", "J_certified", "eps", "alpha_or_delta", "delta_conf", "m"];

const NO_GUARANTEE: &str = "no guarantee";

pub fn write_policy_csv<W: Write>(out: W, rows: &[PolicyCertRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(POLICY_CSV_HEADER)?;
    for row in rows {
        let (j, eps, second) = match (row.j_certified, row.member) {
            (Some(j), Some(m)) => (j.to_string(), m.eps().to_string(), m.alpha_or_delta().to_string()),
            (Some(j), None) => (j.to_string(), "0".to_string(), String::new()),
            (None, _) => (String::new(), NO_GUARANTEE.to_string(), String::new()),
        };
        w.write_record([
            row.r.to_string(),
            row.kind.as_str().to_string(),
            row.j_lower_clean.to_string(),
            j,
            eps,
            second,
            row.delta_conf.to_string(),
            row.m.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field.parse().map_err(|_| Error::Format(format!("{what}: not a number: {field:?}")))
}

pub fn read_policy_csv<R: Read>(input: R) -> Result<Vec<PolicyCertRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != POLICY_CSV_HEADER {
        return Err(Error::Format(format!("policy certificate header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let kind = FamilyKind::parse(&rec[1])?;
        let r: u32 = rec[0].parse().map_err(|_| Error::Format(format!("radius {:?}", &rec[0])))?;
        let (j_certified, member) = if &rec[4] == NO_GUARANTEE {
            (None, None)
        } else {
            let j = parse_f64(&rec[3], "J_certified")?;
            if rec[5].is_empty() {
                (Some(j), None)
            } else {
                let eps = parse_f64(&rec[4], "eps")?;
                let second = parse_f64(&rec[5], "alpha_or_delta")?;
                let m = match kind {
                    FamilyKind::Adp => KMember::Adp { eps, delta: second },
                    FamilyKind::Rdp => KMember::Rdp { alpha: second, eps },
                };
                (Some(j), Some(m))
            }
        };
        rows.push(PolicyCertRow {
            r,
            kind,
            j_lower_clean: parse_f64(&rec[2], "J_lower_clean")?,
            j_certified,
            member,
            delta_conf: parse_f64(&rec[6], "delta_conf")?,
            m: rec[7].parse().map_err(|_| Error::Format(format!("m {:?}", &rec[7])))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accountant::{AccountantInputs, PrivacyLevel};
    use rand::Rng;

    fn cdf(samples: &[f64], a: f64, b: f64) -> EmpiricalCdf {
        EmpiricalCdf::new(samples.to_vec(), a, b).unwrap()
    }

    #[test]
    fn dkw_examples() {
        assert!((dkw_epsilon(500, 0.001).unwrap() - 0.087_184).abs() < 1e-6);
        let e1 = dkw_epsilon(100, 0.05).unwrap();
        let e4 = dkw_epsilon(400, 0.05).unwrap();
        assert!((e1 - 2.0 * e4).abs() < 1e-15);
        assert!(dkw_epsilon(0, 0.1).is_err());
        assert!(dkw_epsilon(10, 1.0).is_err());
    }

    #[test]
    fn zero_band_gives_the_mean() {
        let c = cdf(&[0.0, 0.2, 0.2, 0.9, 1.0], 0.0, 1.0);
        assert!((j_lower_clean(&c, 0.0).unwrap() - c.mean()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_at_b_loses_the_band_width() {
        let c = cdf(&[2.0; 10], 0.0, 2.0);
        let eps = 0.1;
        assert!((j_lower_clean(&c, eps).unwrap() - 2.0 * (1.0 - eps)).abs() < 1e-15);
    }

    #[test]
    fn matches_riemann_sum() {
        let mut rng = rng::stream(12);
        let samples: Vec<f64> = (0..200).map(|_| if rng.random_bool(0.35) { 0.25 } else { 0.8 }).collect();
        let c = cdf(&samples, 0.0, 1.0);
        let eps = 0.05;
        let n = 1_000_000;
        let h = 1.0 / n as f64;
        let riemann: f64 = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                (1.0 - c.eval(x) - eps).clamp(0.0, 1.0) * h
            })
            .sum();
        assert!((j_lower_clean(&c, eps).unwrap() - riemann).abs() < 1e-6);
    }

    #[test]
    fn lower_bound_non_increasing_in_band() {
        let mut rng = rng::stream(5);
        let samples: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..3.0)).collect();
        let c = cdf(&samples, 0.0, 3.0);
        let mut prev = f64::INFINITY;
        for i in 0..=20 {
            let j = j_lower_clean(&c, f64::from(i) * 0.05).unwrap();
            assert!(j <= prev && j <= c.mean() + 1e-12);
            prev = j;
        }
    }

    #[test]
    fn adp_examples() {
        assert_eq!(certify_policy_adp(0.7, 1.0, 0.0, 0.0), 0.7);
        assert!((certify_policy_adp(10.0, 100.0, 2f64.ln(), 0.0) - 5.0).abs() < 1e-12);
        assert_eq!(certify_policy_adp(10.0, 100.0, 0.3, 0.1), 0.0);
    }

    #[test]
    fn rdp_examples() {
        assert!((certify_policy_rdp(3.0, 3.0, 0.0, 5.0) - 3.0).abs() < 1e-12);
        assert!((certify_policy_rdp(0.5, 1.0, 0.0, 2.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn certificates_bounded_and_monotone() {
        let mut rng = rng::stream(8);
        for _ in 0..500 {
            let b = rng.random_range(0.1..100.0);
            let j = rng.random_range(0.0..=b);
            let delta = rng.random_range(0.0..0.1);
            let alpha = rng.random_range(1.01..300.0);
            let e1 = rng.random_range(0.0..5.0);
            let e2 = e1 + rng.random_range(0.0..5.0);
            for (lo, hi) in [
                (certify_policy_adp(j, b, e2, delta), certify_policy_adp(j, b, e1, delta)),
                (certify_policy_rdp(j, b, e2, alpha), certify_policy_rdp(j, b, e1, alpha)),
            ] {
                assert!(lo <= hi && hi <= j * (1.0 + 1e-12) && lo >= 0.0);
            }
        }
    }

    #[test]
    fn real_valued_identity_and_degeneration() {
        let identity = KMember::Adp { eps: 0.0, delta: 0.0 };
        assert!((certify_policy_real(0.8, 0.3, -1.0, 1.0, &identity) - 0.5).abs() < 1e-15);

        let adp = KMember::Adp { eps: 0.4, delta: 0.01 };
        let rdp = KMember::Rdp { alpha: 6.0, eps: 0.4 };
        let a = -1e-300;
        assert!((certify_policy_real(0.6, 0.0, a, 1.0, &adp) - certify_policy_adp(0.6, 1.0, 0.4, 0.01)).abs() < 1e-12);
        assert!((certify_policy_real(0.6, 0.0, a, 1.0, &rdp) - certify_policy_rdp(0.6, 1.0, 0.4, 6.0)).abs() < 1e-12);
    }

    #[test]
    fn real_valued_two_point_hand_computation() {
        // X = +1 w.p. 3/4 and -1 w.p. 1/4, exact CDF (no band)
        let c = cdf(&[-1.0, 1.0, 1.0, 1.0], -1.0, 1.0);
        let jp = j_lower_positive(&c, 0.0);
        let jm = j_upper_negative(&c, 0.0);
        assert!((jp - 0.75).abs() < 1e-15 && (jm - 0.25).abs() < 1e-15);
        let adp = KMember::Adp { eps: 2f64.ln(), delta: 0.01 };
        // 0.5 * (0.75 - 0.01) - (2 * 0.25 + 0.01)
        assert!((certify_policy_real(jp, jm, -1.0, 1.0, &adp) - (-0.14)).abs() < 1e-12);
        let rdp = KMember::Rdp { alpha: 2.0, eps: 0.0 };
        // 0.75^2 - sqrt(0.25)
        assert!((certify_policy_real(jp, jm, -1.0, 1.0, &rdp) - (0.5625 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn curve_rows_and_csv_round_trip() {
        let c = cdf(&(0..500).map(|i| f64::from(i % 7) / 6.0).collect::<Vec<_>>(), 0.0, 1.0);
        let clean = CleanBound::from_cdf(&c, 0.001).unwrap();
        let acc = Accountant::new(AccountantInputs {
            level: PrivacyLevel::Transition,
            sample_rate: 0.001,
            noise_multiplier: 2.0,
            steps: 1000,
        })
        .unwrap();
        let rows = certify_curve(&clean, &acc, &DEFAULT_R_RANGE, &DEFAULT_DELTA_GRID).unwrap();
        assert_eq!(rows.len(), 2 * DEFAULT_R_RANGE.len());
        for row in rows.iter().filter(|r| r.r == 0) {
            assert_eq!(row.j_certified, Some(clean.j_lower()));
        }
        let mut buf = Vec::new();
        write_policy_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("r,kind,J_lower_clean,J_certified,eps,alpha_or_delta,delta_conf,m\n"));
        assert_eq!(read_policy_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn check_curve_catches_increase() {
        let row = |r, j| PolicyCertRow {
            r,
            kind: FamilyKind::Adp,
            j_lower_clean: 1.0,
            j_certified: j,
            member: None,
            delta_conf: 0.01,
            m: 10,
        };
        assert!(check_curve(&[row(0, Some(1.0)), row(1, Some(0.5)), row(2, None)]).is_ok());
        assert!(matches!(check_curve(&[row(1, Some(0.5)), row(2, Some(0.6))]), Err(Error::Assertion(_))));
        assert!(check_curve(&[row(1, None), row(2, Some(0.1))]).is_err());
        assert!(check_curve(&[row(1, Some(1.5))]).is_err());
    }
}
