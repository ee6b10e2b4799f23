//! Pipeline stages. Each stage reads the artifacts of earlier stages from
//! the output directory, refuses artifacts produced under a different
//! config hash, and writes its own outputs atomically with a provenance
//! sidecar.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::io::write_atomic;
use super::plot;
use crate::accountant::{write_golden_csv, Accountant, FamilyKind, PrivacyLevel};
use crate::attacks::{apply_attack, trajectory_diff, transition_diff};
use crate::cert::action::{
    certify_episode, stability_curve, write_radii_csv, write_stability_csv, RadiusRecord, RADII_CSV_HEADER,
};
use crate::cert::policy::{
    check_curve, collect_returns, policy_cert_curve, read_policy_csv, write_policy_csv, CleanBound, EmpiricalCdf,
    PolicyCertRow, PolicyCurve,
};
use crate::error::{Error, Result};
use crate::mdp::{generate_dataset, Dataset};
use crate::rng;
use crate::train::{train_ensemble, PolicyEnsemble};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const DATASET: &str = "dataset.jsonl";
pub const ENSEMBLE: &str = "ensemble";
pub const POLICY_CSV: &str = "policy_cert.csv";
pub const RADII_CSV: &str = "action_radii.csv";
pub const STABILITY_CSV: &str = "stability.csv";
pub const ATTACK_DIR: &str = "attacks";
pub const SOUNDNESS_CSV: &str = "soundness.csv";
pub const GOLDEN_CSV: &str = "golden_accountant.csv";
pub const REPORT_JSON: &str = "report.json";
pub const POLICY_SVG: &str = "policy_cert.svg";
pub const STABILITY_SVG: &str = "stability.svg";

/// Sidecar written next to every artifact as `<name>.prov.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub tool_version: String,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".prov.json");
    path.with_file_name(name)
}

fn provenance(cfg: &ExperimentConfig, stage: &str) -> Provenance {
    Provenance {
        stage: stage.to_string(),
        config_hash: cfg.hash(),
        seeds: cfg.seeds(),
        tool_version: TOOL_VERSION.to_string(),
    }
}

pub fn write_artifact(cfg: &ExperimentConfig, stage: &str, path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes)?;
    write_atomic(&sidecar(path), serde_json::to_string_pretty(&provenance(cfg, stage))?.as_bytes())
}

/// Fails unless `path` and its sidecar exist and carry `cfg`'s hash.
pub fn check_artifact(cfg: &ExperimentConfig, path: &Path) -> Result<Provenance> {
    if !path.exists() {
        return Err(Error::input(format!("missing input {}", path.display())));
    }
    let text = std::fs::read_to_string(sidecar(path))
        .map_err(|_| Error::input(format!("{} has no provenance sidecar", path.display())))?;
    let prov: Provenance =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("provenance of {}: {e}", path.display())))?;
    if prov.config_hash != cfg.hash() {
        return Err(Error::input(format!(
            "{} was produced under config {} but the current config is {}",
            path.display(),
            prov.config_hash,
            cfg.hash()
        )));
    }
    Ok(prov)
}

fn out(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output.join(name)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn gen_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    let ds = generate_dataset(&cfg.env, &cfg.behavior(), cfg.data.trajectories, &mut rng::stream(cfg.data.seed))?;
    write_artifact(cfg, "gen-data", &out(cfg, DATASET), ds.to_jsonl()?.as_bytes())?;
    Ok(ds)
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let path = out(cfg, DATASET);
    check_artifact(cfg, &path)?;
    Dataset::read_jsonl(&path)
}

pub fn train(cfg: &ExperimentConfig) -> Result<PolicyEnsemble> {
    let ds = load_dataset(cfg)?;
    let mut ens = train_ensemble(
        &ds,
        cfg.feature_map(),
        cfg.env.n_actions(),
        &cfg.train.trainer,
        cfg.train.p,
        cfg.train.seed,
        cfg.train.parallel,
    )?;
    ens.meta.config_hash = Some(cfg.hash());
    ens.save(&out(cfg, ENSEMBLE))?;
    Ok(ens)
}

pub fn load_ensemble(cfg: &ExperimentConfig) -> Result<PolicyEnsemble> {
    let dir = out(cfg, ENSEMBLE);
    if !dir.join("manifest.json").exists() {
        return Err(Error::input(format!("missing ensemble in {}", dir.display())));
    }
    let ens = PolicyEnsemble::load(&dir)?;
    if ens.meta.config_hash.as_deref() != Some(cfg.hash().as_str()) {
        return Err(Error::input("ensemble was trained under a different config"));
    }
    Ok(ens)
}

/// Fails unless the smallest epsilon of each family never decreases along
/// the radii.
pub fn check_family_monotone(acc: &Accountant, radii: &[u32], delta_grid: &[f64]) -> Result<()> {
    let mut sorted: Vec<u32> = radii.iter().copied().filter(|&r| r > 0).collect();
    sorted.sort_unstable();
    for kind in FamilyKind::BOTH {
        let mut prev = f64::NEG_INFINITY;
        for &r in &sorted {
            let e = acc.family(r, kind, delta_grid)?.min_eps().unwrap_or(f64::INFINITY);
            if e < prev {
                return Err(Error::Assertion(format!("{} family min-eps decreases at r={r}", kind.as_str())));
            }
            prev = e;
        }
    }
    Ok(())
}

pub fn certify_policy(cfg: &ExperimentConfig) -> Result<PolicyCurve> {
    let ens = load_ensemble(cfg)?;
    let c = &cfg.certify;
    let curve = policy_cert_curve(&ens, &cfg.env, c.rollouts_per_instance, &c.r_range, c.delta_conf, &c.delta_grid, c.seed)?;
    check_family_monotone(&Accountant::new(ens.meta.accountant_inputs())?, &c.r_range, &c.delta_grid)?;
    let bytes = csv_bytes(|b| write_policy_csv(b, &curve.rows))?;
    write_artifact(cfg, "certify-policy", &out(cfg, POLICY_CSV), &bytes)?;
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionCertificate {
    pub episodes: Vec<Vec<RadiusRecord>>,
    pub stability: Vec<(FamilyKind, Vec<(u32, f64)>)>,
}

impl ActionCertificate {
    pub fn radii(&self, kind: FamilyKind) -> Vec<u32> {
        self.episodes.iter().flatten().filter(|r| r.kind == kind).map(|r| r.r_t).collect()
    }
}

/// Certifies every step of `episodes` voted-policy episodes; episode `e`
/// draws environment noise from child stream `e` of a stream derived from
/// the certify seed.
pub fn certify_actions(ens: &PolicyEnsemble, cfg: &ExperimentConfig) -> Result<ActionCertificate> {
    let c = &cfg.certify;
    let acc = Accountant::new(ens.meta.accountant_inputs())?;
    let base = rng::mix(c.seed, 1);
    let episodes = (0..c.episodes)
        .into_par_iter()
        .map(|e| {
            certify_episode(ens, &cfg.env, &mut rng::child_stream(base, e as u64), &acc, c.alpha_conf, c.r_max, &c.delta_grid)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cert = ActionCertificate { episodes, stability: Vec::new() };
    for kind in FamilyKind::BOTH {
        cert.stability.push((kind, stability_curve(&cert.radii(kind))?));
    }
    Ok(cert)
}

pub fn certify_action(cfg: &ExperimentConfig) -> Result<ActionCertificate> {
    let ens = load_ensemble(cfg)?;
    let cert = certify_actions(&ens, cfg)?;
    let radii = csv_bytes(|b| write_radii_csv(b, &cert.episodes, cfg.certify.alpha_conf, cfg.certify.r_max))?;
    write_artifact(cfg, "certify-action", &out(cfg, RADII_CSV), &radii)?;
    let stab = csv_bytes(|b| write_stability_csv(b, &cert.stability))?;
    write_artifact(cfg, "certify-action", &out(cfg, STABILITY_CSV), &stab)?;
    Ok(cert)
}

pub fn attack_path(cfg: &ExperimentConfig, k: usize) -> PathBuf {
    cfg.output.join(ATTACK_DIR).join(format!("attack_{k}.jsonl"))
}

pub fn attack(cfg: &ExperimentConfig) -> Result<Vec<Dataset>> {
    if cfg.attacks.is_empty() {
        return Err(Error::config("no attacks configured"));
    }
    let ds = load_dataset(cfg)?;
    let mut outs = Vec::new();
    for (k, spec) in cfg.attacks.iter().enumerate() {
        let attacked = apply_attack(&ds, spec, cfg.env.n_actions())?;
        write_artifact(cfg, "attack", &attack_path(cfg, k), attacked.to_jsonl()?.as_bytes())?;
        outs.push(attacked);
    }
    Ok(outs)
}

/// Number of units changed, counted at the privacy level of the trainer.
pub fn effective_radius(level: PrivacyLevel, clean: &Dataset, attacked: &Dataset) -> Result<u32> {
    let n = match level {
        PrivacyLevel::Trajectory => trajectory_diff(clean, attacked)?,
        PrivacyLevel::Transition => transition_diff(clean, attacked)?,
    };
    u32::try_from(n).map_err(|_| Error::input("poisoning radius overflows u32"))
}

/// Best certificate over both kinds at radius `r`, or `None` without a
/// guarantee.
pub fn best_certificate(clean: &CleanBound, acc: &Accountant, r: u32, delta_grid: &[f64]) -> Result<Option<(f64, FamilyKind)>> {
    if r == 0 {
        return Ok(Some((clean.j_lower(), FamilyKind::Adp)));
    }
    let mut best: Option<(f64, FamilyKind)> = None;
    for kind in FamilyKind::BOTH {
        if let Some((j, _)) = clean.best(&acc.family(r, kind, delta_grid)?) {
            if best.is_none_or(|(b, _)| j > b) {
                best = Some((j, kind));
            }
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundnessRow {
    pub attack: usize,
    pub budget: usize,
    pub r_eff: u32,
    pub trial: usize,
    pub empirical_ecr: f64,
    pub j_certified: Option<f64>,
    pub kind: Option<FamilyKind>,
    pub pass: bool,
}

/// Clean DKW bound of an ensemble, from the same rollouts policy
/// certification uses.
pub fn clean_bound(ens: &PolicyEnsemble, cfg: &ExperimentConfig) -> Result<CleanBound> {
    let c = &cfg.certify;
    let returns = collect_returns(ens, &cfg.env, c.rollouts_per_instance, c.seed)?;
    let (a, b) = cfg.env.reward_bounds();
    CleanBound::from_cdf(&EmpiricalCdf::new(returns, a.min(0.0), b)?, c.delta_conf)
}

/// Retrains from scratch on each attacked dataset `trials` times and
/// compares the empirical mean return with the certificate at the attack's
/// effective radius.
pub fn soundness_rows(cfg: &ExperimentConfig, clean_ds: &Dataset, clean: &CleanBound) -> Result<Vec<SoundnessRow>> {
    let trainer = &cfg.train.trainer;
    let acc = Accountant::new(trainer.accountant_inputs())?;
    let mut rows = Vec::new();
    for (k, spec) in cfg.attacks.iter().enumerate() {
        let attacked = apply_attack(clean_ds, spec, cfg.env.n_actions())?;
        let r_eff = effective_radius(trainer.level(), clean_ds, &attacked)?;
        let cert = best_certificate(clean, &acc, r_eff, &cfg.certify.delta_grid)?;
        for trial in 0..cfg.soundness.trials {
            let seed = rng::mix(cfg.soundness.seed, (k * 1_000_003 + trial) as u64);
            let ens = train_ensemble(
                &attacked,
                cfg.feature_map(),
                cfg.env.n_actions(),
                trainer,
                cfg.train.p,
                seed,
                cfg.train.parallel,
            )?;
            let returns = collect_returns(&ens, &cfg.env, cfg.certify.rollouts_per_instance, rng::mix(seed, 1))?;
            let ecr = returns.iter().sum::<f64>() / returns.len() as f64;
            rows.push(SoundnessRow {
                attack: k,
                budget: spec.budget,
                r_eff,
                trial,
                empirical_ecr: ecr,
                j_certified: cert.map(|c| c.0),
                kind: cert.map(|c| c.1),
                pass: cert.is_none_or(|(j, _)| ecr >= j),
            });
        }
    }
    Ok(rows)
}

pub const SOUNDNESS_CSV_HEADER: [&str; 8] =
    ["attack", "r", "r_eff", "trial", "empirical_ecr", "J_certified", "kind", "pass"];

pub fn eval_soundness(cfg: &ExperimentConfig) -> Result<Vec<SoundnessRow>> {
    if cfg.attacks.is_empty() {
        return Err(Error::config("no attacks configured"));
    }
    let ds = load_dataset(cfg)?;
    let ens = load_ensemble(cfg)?;
    let clean = clean_bound(&ens, cfg)?;
    let rows = soundness_rows(cfg, &ds, &clean)?;
    let bytes = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(SOUNDNESS_CSV_HEADER)?;
        for r in &rows {
            w.write_record([
                r.attack.to_string(),
                r.budget.to_string(),
                r.r_eff.to_string(),
                r.trial.to_string(),
                r.empirical_ecr.to_string(),
                r.j_certified.map(|j| j.to_string()).unwrap_or_default(),
                r.kind.map(|k| k.as_str().to_string()).unwrap_or_default(),
                r.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_artifact(cfg, "eval-soundness", &out(cfg, SOUNDNESS_CSV), &bytes)?;
    for r in &rows {
        println!(
            "attack {} r={} r_eff={} trial {}: empirical ECR {:.6} certified {}",
            r.attack,
            r.budget,
            r.r_eff,
            r.trial,
            r.empirical_ecr,
            r.j_certified.map(|j| format!("{j:.6}")).unwrap_or_else(|| "none".into())
        );
    }
    if let Some(bad) = rows.iter().find(|r| !r.pass) {
        return Err(Error::Assertion(format!(
            "attack {} trial {}: empirical ECR {} below certified {:?}",
            bad.attack, bad.trial, bad.empirical_ecr, bad.j_certified
        )));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub delta_conf: f64,
    pub alpha_conf: f64,
    pub dp_delta_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub r: u32,
    pub kind: FamilyKind,
    pub j_certified: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    pub confidence: ConfidenceParams,
    pub j_lower_clean: f64,
    pub policy_curve: Vec<CurvePoint>,
    pub mean_radius: Vec<(FamilyKind, f64)>,
    pub stability: Vec<(FamilyKind, Vec<(u32, f64)>)>,
}

fn read_radii(path: &Path) -> Result<Vec<(FamilyKind, u32)>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != RADII_CSV_HEADER {
        return Err(Error::Format(format!("radii header {header:?}")));
    }
    rd.records()
        .map(|rec| {
            let rec = rec?;
            let r = rec[3].parse().map_err(|_| Error::Format(format!("radius {:?}", &rec[3])))?;
            Ok((FamilyKind::parse(&rec[4])?, r))
        })
        .collect()
}

/// Collects the certification artifacts into `report.json` and renders the
/// SVG charts.
pub fn report(cfg: &ExperimentConfig) -> Result<CertificationReport> {
    let policy_path = out(cfg, POLICY_CSV);
    let stab_path = out(cfg, STABILITY_CSV);
    let radii_path = out(cfg, RADII_CSV);
    for p in [&policy_path, &stab_path, &radii_path] {
        check_artifact(cfg, p)?;
    }
    let rows: Vec<PolicyCertRow> = read_policy_csv(std::fs::File::open(&policy_path)?)?;
    check_curve(&rows)?;
    let stability = plot::read_stability_csv(std::fs::File::open(&stab_path)?)?;
    let radii = read_radii(&radii_path)?;
    let mean_radius = FamilyKind::BOTH
        .iter()
        .map(|&k| {
            let v: Vec<f64> = radii.iter().filter(|r| r.0 == k).map(|r| f64::from(r.1)).collect();
            (k, if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 })
        })
        .collect();
    plot::emit_plot(&policy_path, &out(cfg, POLICY_SVG))?;
    plot::emit_plot(&stab_path, &out(cfg, STABILITY_SVG))?;
    let rep = CertificationReport {
        config_hash: cfg.hash(),
        seeds: cfg.seeds(),
        tool_version: TOOL_VERSION.to_string(),
        confidence: ConfidenceParams {
            delta_conf: cfg.certify.delta_conf,
            alpha_conf: cfg.certify.alpha_conf,
            dp_delta_grid: cfg.certify.delta_grid.clone(),
        },
        j_lower_clean: rows.first().map(|r| r.j_lower_clean).unwrap_or(f64::NAN),
        policy_curve: rows.iter().map(|r| CurvePoint { r: r.r, kind: r.kind, j_certified: r.j_certified }).collect(),
        mean_radius,
        stability,
    };
    write_artifact(cfg, "report", &out(cfg, REPORT_JSON), serde_json::to_string_pretty(&rep)?.as_bytes())?;
    Ok(rep)
}

/// Every family member of the configured training run at every positive
/// radius of `certify.r_range`.
pub fn golden_accountant(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let acc = Accountant::new(cfg.train.trainer.accountant_inputs())?;
    let radii: Vec<u32> = cfg.certify.r_range.iter().copied().filter(|&r| r > 0).collect();
    let bytes = csv_bytes(|b| write_golden_csv(b, &acc, &radii, &cfg.certify.delta_grid))?;
    let path = out(cfg, GOLDEN_CSV);
    write_artifact(cfg, "golden-accountant", &path, &bytes)?;
    Ok(path)
}
