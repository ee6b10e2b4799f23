//! Rényi-DP accounting for the sampled Gaussian mechanism and the
//! outcome-guarantee function families derived from it.
//!
//! Training with `T` steps of the sampled Gaussian mechanism at sampling rate
//! `q` and noise multiplier `sigma` is `(alpha, T * eps_step(alpha))`-RDP for
//! every integer order. Datasets at distance `r` are covered through group
//! privacy, either in RDP (halving the order and tripling epsilon for every
//! doubling of `r`) or after conversion to `(eps, delta)`-DP. Each resulting
//! guarantee is a member `K` of a family; a member bounds
//! `Pr[M(D1) in S] <= K(Pr[M(D2) in S])` for all datasets within radius `r`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit the privacy guarantee protects, and hence the unit of poisoning
/// radius it certifies against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrivacyLevel {
    Transition,
    Trajectory,
}

impl PrivacyLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            PrivacyLevel::Transition => "transition",
            PrivacyLevel::Trajectory => "trajectory",
        }
    }
}

/// Parameters of a trained model that determine its privacy guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountantInputs {
    pub level: PrivacyLevel,
    pub sample_rate: f64,
    pub noise_multiplier: f64,
    pub steps: usize,
}

/// Integer orders 2..=256 followed by powers of two up to 4096.
///
/// Group privacy consumes factors of two of the order, so large powers of
/// two keep the RDP family non-empty at large radii.
pub fn default_orders() -> Vec<u32> {
    (2..=256).chain([512, 1024, 2048, 4096]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdpPoint {
    pub alpha: u32,
    pub eps: f64,
}

/// An RDP guarantee evaluated on a finite grid of integer orders, sorted by
/// order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RdpCurve {
    pub points: Vec<RdpPoint>,
}

impl RdpCurve {
    pub fn new(mut points: Vec<RdpPoint>) -> Self {
        points.sort_by_key(|p| p.alpha);
        RdpCurve { points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, alpha: u32) -> Option<f64> {
        self.points
            .binary_search_by_key(&alpha, |p| p.alpha)
            .ok()
            .map(|i| self.points[i].eps)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Per-step RDP of the Poisson-subsampled Gaussian mechanism at integer
/// order `alpha`:
///
/// `1/(alpha-1) * log sum_k C(alpha,k) (1-q)^(alpha-k) q^k exp((k^2-k)/(2 sigma^2))`.
///
/// Returns [`Error::NoGuarantee`] when `sigma == 0` and `q > 0`.
pub fn rdp_sgm_step(q: f64, sigma: f64, alpha: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::input(format!("sample rate {q} outside [0, 1]")));
    }
    if alpha < 2 {
        return Err(Error::input(format!("order {alpha} below 2")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::input(format!("noise multiplier {sigma} negative")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if sigma == 0.0 {
        return Err(Error::NoGuarantee(format!("sigma = 0 with q = {q}")));
    }
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    let two_var = 2.0 * sigma * sigma;
    let mut terms = Vec::with_capacity(alpha as usize + 1);
    let mut log_binom = 0.0;
    for k in 0..=alpha {
        if k > 0 {
            log_binom += f64::from(alpha - k + 1).ln() - f64::from(k).ln();
        }
        let rest = alpha - k;
        let tail = if rest == 0 { 0.0 } else { f64::from(rest) * ln_1mq };
        let head = if k == 0 { 0.0 } else { f64::from(k) * ln_q };
        let kf = f64::from(k);
        terms.push(log_binom + head + tail + (kf * kf - kf) / two_var);
    }
    let eps = log_sum_exp(&terms) / f64::from(alpha - 1);
    if !eps.is_finite() {
        return Err(Error::Numeric(format!("non-finite RDP at order {alpha}")));
    }
    // the sum is at least 1 in exact arithmetic
    Ok(eps.max(0.0))
}

/// Per-step RDP curve of the sampled Gaussian mechanism over `orders`.
pub fn sgm_curve(q: f64, sigma: f64, orders: &[u32]) -> Result<RdpCurve> {
    let points = orders
        .iter()
        .map(|&alpha| Ok(RdpPoint { alpha, eps: rdp_sgm_step(q, sigma, alpha)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(RdpCurve::new(points))
}

/// Additive composition over `steps` identical mechanisms.
pub fn compose(curve: &RdpCurve, steps: usize) -> RdpCurve {
    let t = steps as f64;
    RdpCurve { points: curve.points.iter().map(|p| RdpPoint { alpha: p.alpha, eps: p.eps * t }).collect() }
}

/// `ceil(log2 r)` for `r >= 1`.
pub fn doublings(r: u32) -> u32 {
    debug_assert!(r >= 1);
    r.next_power_of_two().trailing_zeros()
}

/// Extends a single-record RDP guarantee to datasets differing in `r`
/// records.
///
/// With `c = ceil(log2 r)`, every order `alpha` divisible by `2^c` with
/// `alpha / 2^c >= 2` yields `(alpha / 2^c, 3^c * eps(alpha))`; other orders
/// are dropped.
pub fn rdp_group(curve: &RdpCurve, r: u32) -> Result<RdpCurve> {
    if r == 0 {
        return Err(Error::input("group size must be at least 1"));
    }
    let c = doublings(r);
    let span = 1u64 << c;
    let factor = 3f64.powi(c as i32);
    let points: Vec<RdpPoint> = curve
        .points
        .iter()
        .filter(|p| u64::from(p.alpha) % span == 0 && u64::from(p.alpha) / span >= 2)
        .map(|p| RdpPoint { alpha: (u64::from(p.alpha) / span) as u32, eps: factor * p.eps })
        .collect();
    if points.is_empty() {
        return Err(Error::NoGuarantee(format!("no RDP order survives grouping to radius {r}")));
    }
    Ok(RdpCurve::new(points))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdpPoint {
    pub eps: f64,
    pub delta: f64,
}

/// Result of an RDP to ADP conversion: the point and the order attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conversion {
    pub point: AdpPoint,
    pub alpha: u32,
}

/// `eps = min_alpha eps(alpha) + ln(1/delta) / (alpha - 1)`.
pub fn rdp_to_adp(curve: &RdpCurve, delta: f64) -> Result<Conversion> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input(format!("delta {delta} outside (0, 1)")));
    }
    let log_inv = -delta.ln();
    curve
        .points
        .iter()
        .map(|p| Conversion {
            point: AdpPoint { eps: p.eps + log_inv / f64::from(p.alpha - 1), delta },
            alpha: p.alpha,
        })
        .min_by(|a, b| a.point.eps.total_cmp(&b.point.eps))
        .ok_or_else(|| Error::NoGuarantee("empty RDP curve".into()))
}

/// `(r * eps, delta * (e^(r eps) - 1) / (e^eps - 1))`.
///
/// The `delta` multiplier tends to `r` as `eps -> 0`.
pub fn adp_group(point: AdpPoint, r: u32) -> Result<AdpPoint> {
    if r == 0 {
        return Err(Error::input("group size must be at least 1"));
    }
    if r == 1 {
        return Ok(point);
    }
    let rf = f64::from(r);
    let multiplier = if point.eps == 0.0 { rf } else { (rf * point.eps).exp_m1() / point.eps.exp_m1() };
    let delta = point.delta * multiplier;
    if !(delta < 1.0) {
        return Err(Error::NoGuarantee(format!("grouped delta {delta} at radius {r}")));
    }
    Ok(AdpPoint { eps: rf * point.eps, delta: delta.max(0.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FamilyKind {
    Adp,
    Rdp,
}

impl FamilyKind {
    pub const BOTH: [FamilyKind; 2] = [FamilyKind::Adp, FamilyKind::Rdp];

    pub fn as_str(self) -> &'static str {
        match self {
            FamilyKind::Adp => "ADP",
            FamilyKind::Rdp => "RDP",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ADP" => Ok(FamilyKind::Adp),
            "RDP" => Ok(FamilyKind::Rdp),
            _ => Err(Error::Format(format!("unknown family kind {s:?}"))),
        }
    }
}

/// One outcome-guarantee function `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum KMember {
    /// `K(x) = e^eps x + delta`.
    Adp { eps: f64, delta: f64 },
    /// `K(x) = (e^eps x)^((alpha - 1) / alpha)`.
    Rdp { alpha: f64, eps: f64 },
}

impl KMember {
    pub fn kind(&self) -> FamilyKind {
        match self {
            KMember::Adp { .. } => FamilyKind::Adp,
            KMember::Rdp { .. } => FamilyKind::Rdp,
        }
    }

    pub fn eps(&self) -> f64 {
        match *self {
            KMember::Adp { eps, .. } | KMember::Rdp { eps, .. } => eps,
        }
    }

    /// The member's second parameter: `delta` for ADP, `alpha` for RDP.
    pub fn alpha_or_delta(&self) -> f64 {
        match *self {
            KMember::Adp { delta, .. } => delta,
            KMember::Rdp { alpha, .. } => alpha,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            KMember::Adp { eps, delta } => eps.exp() * x + delta,
            KMember::Rdp { alpha, eps } => (eps.exp() * x).powf((alpha - 1.0) / alpha),
        }
    }

    pub fn inverse(&self, x: f64) -> f64 {
        match *self {
            KMember::Adp { eps, delta } => (x - delta).max(0.0) * (-eps).exp(),
            KMember::Rdp { alpha, eps } => (-eps).exp() * x.powf(alpha / (alpha - 1.0)),
        }
    }
}

/// All guarantees of one kind available at poisoning radius `radius`.
///
/// An empty family certifies nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct KFamily {
    pub kind: FamilyKind,
    pub radius: u32,
    pub members: Vec<KMember>,
}

impl KFamily {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn min_eps(&self) -> Option<f64> {
        self.members.iter().map(KMember::eps).min_by(f64::total_cmp)
    }
}

/// The composed RDP curve of a training run, from which families at any
/// radius are derived.
#[derive(Debug, Clone)]
pub struct Accountant {
    pub inputs: AccountantInputs,
    pub composed: RdpCurve,
}

impl Accountant {
    pub fn new(inputs: AccountantInputs) -> Result<Self> {
        Self::with_orders(inputs, &default_orders())
    }

    pub fn with_orders(inputs: AccountantInputs, orders: &[u32]) -> Result<Self> {
        if inputs.steps == 0 {
            return Err(Error::input("training must take at least one step"));
        }
        let step = sgm_curve(inputs.sample_rate, inputs.noise_multiplier, orders)?;
        Ok(Accountant { inputs, composed: compose(&step, inputs.steps) })
    }

    /// Accountant for a mechanism whose composed RDP curve is known directly.
    pub fn from_curve(inputs: AccountantInputs, composed: RdpCurve) -> Self {
        Accountant { inputs, composed }
    }

    /// Family of the given kind at radius `r >= 1`.
    ///
    /// RDP members come from grouping the composed curve. ADP members, for
    /// every `delta` in `delta_grid`, come from both orders of operations:
    /// converting then grouping in ADP, and grouping in RDP then converting.
    /// Guarantees that do not exist at this radius are left out.
    pub fn family(&self, r: u32, kind: FamilyKind, delta_grid: &[f64]) -> Result<KFamily> {
        if r == 0 {
            return Err(Error::input("family radius must be at least 1"));
        }
        let grouped = match rdp_group(&self.composed, r) {
            Ok(c) => Some(c),
            Err(Error::NoGuarantee(_)) => None,
            Err(e) => return Err(e),
        };
        let mut members = Vec::new();
        match kind {
            FamilyKind::Rdp => {
                if let Some(curve) = &grouped {
                    members.extend(curve.points.iter().map(|p| KMember::Rdp { alpha: f64::from(p.alpha), eps: p.eps }));
                }
            }
            FamilyKind::Adp => {
                for &delta in delta_grid {
                    let convert_then_group =
                        rdp_to_adp(&self.composed, delta).and_then(|c| adp_group(c.point, r));
                    let group_then_convert = match &grouped {
                        Some(curve) => rdp_to_adp(curve, delta).map(|c| c.point),
                        None => Err(Error::NoGuarantee(String::new())),
                    };
                    for point in [convert_then_group, group_then_convert] {
                        match point {
                            Ok(p) => {
                                let m = KMember::Adp { eps: p.eps, delta: p.delta };
                                if !members.contains(&m) {
                                    members.push(m);
                                }
                            }
                            Err(Error::NoGuarantee(_)) => {}
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
        }
        Ok(KFamily { kind, radius: r, members })
    }
}

/// Both families at radius `r` for a training run: `(ADP, RDP)`.
pub fn k_family_at_radius(inputs: AccountantInputs, r: u32, delta_grid: &[f64]) -> Result<(KFamily, KFamily)> {
    let acc = Accountant::new(inputs)?;
    Ok((acc.family(r, FamilyKind::Adp, delta_grid)?, acc.family(r, FamilyKind::Rdp, delta_grid)?))
}

/// Writes every family member at every radius as CSV with columns
/// `level,q,sigma,T,r,kind,alpha,eps,delta`. ADP rows leave `alpha` empty
/// and RDP rows leave `delta` empty.
pub fn write_golden_csv<W: Write>(
    out: W,
    accountant: &Accountant,
    radii: &[u32],
    delta_grid: &[f64],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["level", "q", "sigma", "T", "r", "kind", "alpha", "eps", "delta"])?;
    let inp = accountant.inputs;
    for &r in radii {
        for kind in FamilyKind::BOTH {
            for m in accountant.family(r, kind, delta_grid)?.members {
                let (alpha, delta) = match m {
                    KMember::Adp { delta, .. } => (String::new(), delta.to_string()),
                    KMember::Rdp { alpha, .. } => (alpha.to_string(), String::new()),
                };
                w.write_record([
                    inp.level.as_str().to_string(),
                    inp.sample_rate.to_string(),
                    inp.noise_multiplier.to_string(),
                    inp.steps.to_string(),
                    r.to_string(),
                    kind.as_str().to_string(),
                    alpha,
                    m.eps().to_string(),
                    delta,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(u32, f64)]) -> RdpCurve {
        RdpCurve::new(points.iter().map(|&(alpha, eps)| RdpPoint { alpha, eps }).collect())
    }

    #[test]
    fn zero_sampling_costs_nothing() {
        assert_eq!(rdp_sgm_step(0.0, 1.0, 8).unwrap(), 0.0);
        assert_eq!(rdp_sgm_step(0.0, 0.0, 8).unwrap(), 0.0);
    }

    #[test]
    fn full_batch_is_the_gaussian_mechanism() {
        assert!((rdp_sgm_step(1.0, 2.0, 4).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    #[allow(clippy::excessive_precision, clippy::inconsistent_digit_grouping)]
    fn matches_high_precision_reference() {
        // 50-digit evaluations of the same sum
        let cases = [
            (0.016, 2.0, 8, 0.000_299_697_146_155_857_526_5),
            (0.01, 1.0, 32, 11.246_275_937_048_068_86),
            (0.2, 1.5, 256, 55.273_139_455_229_556_80),
            (0.001, 0.8, 4096, 3193.090_557_845_491_505),
        ];
        for (q, sigma, alpha, want) in cases {
            let got = rdp_sgm_step(q, sigma, alpha).unwrap();
            assert!((got - want).abs() <= 1e-10 * want, "q={q} sigma={sigma} alpha={alpha}: {got} vs {want}");
        }
    }

    #[test]
    fn noiseless_sampling_has_no_guarantee() {
        assert!(matches!(rdp_sgm_step(0.1, 0.0, 2), Err(Error::NoGuarantee(_))));
    }

    #[test]
    fn sgm_monotone_in_sigma_and_q() {
        let qs = [0.001, 0.01, 0.05, 0.2, 0.5, 1.0];
        let sigmas = [0.7, 1.0, 1.5, 2.0, 4.0];
        for alpha in [2, 3, 8, 32, 128] {
            for &q in &qs {
                for w in sigmas.windows(2) {
                    let a = rdp_sgm_step(q, w[0], alpha).unwrap();
                    let b = rdp_sgm_step(q, w[1], alpha).unwrap();
                    assert!(b <= a * (1.0 + 1e-12), "sigma monotonicity at q={q} alpha={alpha}");
                }
            }
            for &s in &sigmas {
                for w in qs.windows(2) {
                    let a = rdp_sgm_step(w[0], s, alpha).unwrap();
                    let b = rdp_sgm_step(w[1], s, alpha).unwrap();
                    assert!(a <= b * (1.0 + 1e-12), "q monotonicity at sigma={s} alpha={alpha}");
                }
            }
        }
    }

    #[test]
    fn composition_is_additive() {
        let c = sgm_curve(0.05, 1.3, &[2, 5, 17]).unwrap();
        assert_eq!(compose(&c, 1), c);
        for (d, p) in compose(&c, 2).points.iter().zip(&c.points) {
            assert_eq!(d.eps, 2.0 * p.eps);
        }
        assert_eq!(compose(&compose(&c, 3), 5), compose(&c, 15));
    }

    #[test]
    fn grouping_examples() {
        let c = curve(&[(4, 0.1)]);
        assert_eq!(rdp_group(&c, 1).unwrap(), c);
        let g = rdp_group(&c, 2).unwrap();
        assert_eq!(g.points.len(), 1);
        assert_eq!(g.points[0].alpha, 2);
        assert!((g.points[0].eps - 0.3).abs() < 1e-15);

        let dense = sgm_curve(0.02, 1.5, &default_orders()).unwrap();
        assert_eq!(rdp_group(&dense, 3).unwrap(), rdp_group(&dense, 4).unwrap());
        assert!(matches!(rdp_group(&c, 3), Err(Error::NoGuarantee(_))));
    }

    #[test]
    fn doublings_is_ceil_log2() {
        assert_eq!(doublings(1), 0);
        assert_eq!(doublings(2), 1);
        assert_eq!(doublings(3), 2);
        assert_eq!(doublings(4), 2);
        assert_eq!(doublings(5), 3);
        assert_eq!(doublings(512), 9);
    }

    #[test]
    fn conversion_examples() {
        let one = curve(&[(2, 0.0)]);
        let c = rdp_to_adp(&one, (-1f64).exp()).unwrap();
        assert!((c.point.eps - 1.0).abs() < 1e-15);

        let two = curve(&[(2, 0.5), (8, 0.5)]);
        assert_eq!(rdp_to_adp(&two, 1e-3).unwrap().alpha, 8);
        assert!(matches!(rdp_to_adp(&RdpCurve::default(), 0.1), Err(Error::NoGuarantee(_))));
    }

    #[test]
    fn adp_group_examples() {
        let p = AdpPoint { eps: 0.3, delta: 1e-4 };
        assert_eq!(adp_group(p, 1).unwrap(), p);

        let g = adp_group(AdpPoint { eps: 2f64.ln(), delta: 0.01 }, 2).unwrap();
        assert!((g.eps - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!((g.delta - 0.03).abs() < 1e-15);

        let tiny = adp_group(AdpPoint { eps: 1e-8, delta: 0.01 }, 5).unwrap();
        assert!((tiny.delta - 0.05).abs() <= 1e-4 * 0.05);
        assert_eq!(adp_group(AdpPoint { eps: 0.0, delta: 0.01 }, 5).unwrap().delta, 0.05);

        assert!(matches!(adp_group(AdpPoint { eps: 1.0, delta: 0.1 }, 10), Err(Error::NoGuarantee(_))));
    }

    #[test]
    fn k_examples() {
        let adp = KMember::Adp { eps: 0.7, delta: 0.02 };
        assert_eq!(adp.apply(0.0), 0.02);
        assert_eq!(adp.inverse(0.02), 0.0);
        let rdp = KMember::Rdp { alpha: 2.0, eps: 0.0 };
        assert!((rdp.apply(0.25) - 0.5).abs() < 1e-15);
        assert!((rdp.inverse(0.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn k_round_trips() {
        let members = [
            KMember::Adp { eps: 0.0, delta: 0.0 },
            KMember::Adp { eps: 0.5, delta: 1e-3 },
            KMember::Adp { eps: 3.0, delta: 0.2 },
            KMember::Rdp { alpha: 2.0, eps: 0.1 },
            KMember::Rdp { alpha: 7.0, eps: 1.5 },
            KMember::Rdp { alpha: 256.0, eps: 0.01 },
        ];
        for m in members {
            for i in 1..=9 {
                let x = f64::from(i) / 10.0;
                assert!(m.apply(m.inverse(x)) >= x - 1e-12, "{m:?} at {x}");
                assert!(m.inverse(m.apply(x)) <= x + 1e-12, "{m:?} at {x}");
            }
        }
    }

    #[test]
    fn k_strictly_increasing() {
        let members = [KMember::Adp { eps: 0.5, delta: 1e-3 }, KMember::Rdp { alpha: 3.0, eps: 0.4 }];
        for m in members {
            let mut prev = m.apply(1e-9);
            for i in 1..=100 {
                let cur = m.apply(f64::from(i) / 100.0);
                assert!(cur > prev);
                prev = cur;
            }
        }
    }

    #[test]
    fn families_at_radius_one_are_ungrouped() {
        let inputs = AccountantInputs {
            level: PrivacyLevel::Transition,
            sample_rate: 0.02,
            noise_multiplier: 2.0,
            steps: 500,
        };
        let acc = Accountant::new(inputs).unwrap();
        let rdp = acc.family(1, FamilyKind::Rdp, &[1e-5]).unwrap();
        assert_eq!(rdp.members.len(), acc.composed.points.len());
        let adp = acc.family(1, FamilyKind::Adp, &[1e-5]).unwrap();
        assert_eq!(adp.members.len(), 1);
        let direct = rdp_to_adp(&acc.composed, 1e-5).unwrap().point;
        assert_eq!(adp.members[0], KMember::Adp { eps: direct.eps, delta: direct.delta });
    }

    #[test]
    fn family_min_eps_non_decreasing_in_radius() {
        let inputs = AccountantInputs {
            level: PrivacyLevel::Transition,
            sample_rate: 0.01,
            noise_multiplier: 2.0,
            steps: 2000,
        };
        let acc = Accountant::new(inputs).unwrap();
        let grid = [1e-5, 1e-4, 1e-3];
        for kind in FamilyKind::BOTH {
            let mut prev = 0.0;
            for r in 1..=64 {
                let fam = acc.family(r, kind, &grid).unwrap();
                let Some(e) = fam.min_eps() else { break };
                assert!(e >= prev, "{kind:?} r={r}: {e} < {prev}");
                prev = e;
            }
        }
    }
}
