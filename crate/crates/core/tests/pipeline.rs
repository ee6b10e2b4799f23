mod common;

use std::collections::BTreeMap;
use std::path::Path;

use dpcert::harness::{pipeline, ExperimentConfig};
use dpcert::Error;

fn run_all(cfg: &ExperimentConfig) {
    pipeline::gen_data(cfg).unwrap();
    pipeline::train(cfg).unwrap();
    pipeline::certify_policy(cfg).unwrap();
    pipeline::certify_action(cfg).unwrap();
    pipeline::attack(cfg).unwrap();
    pipeline::eval_soundness(cfg).unwrap();
    pipeline::report(cfg).unwrap();
    pipeline::golden_accountant(cfg).unwrap();
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn stages_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small(dir.path());
    run_all(&cfg);
    let first = snapshot(dir.path());
    for name in ["dataset.jsonl", "policy_cert.csv", "report.json", "policy_cert.svg", "stability.svg"] {
        assert!(first.contains_key(name), "missing {name}");
        assert!(first.contains_key(&format!("{name}.prov.json")) || name.ends_with(".svg"));
    }
    run_all(&cfg);
    assert_eq!(first, snapshot(dir.path()));
}

#[test]
fn r0_row_is_the_clean_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small(dir.path());
    pipeline::gen_data(&cfg).unwrap();
    pipeline::train(&cfg).unwrap();
    let curve = pipeline::certify_policy(&cfg).unwrap();
    let rows: Vec<_> = curve.rows.iter().filter(|r| r.r == 0).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r.j_certified, Some(curve.clean.j_lower()));
    }
}

#[test]
fn artifacts_from_another_config_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small(dir.path());
    pipeline::gen_data(&cfg).unwrap();
    pipeline::train(&cfg).unwrap();

    let mut other = cfg.clone();
    other.train.p = 3;
    assert!(matches!(pipeline::train(&other), Err(Error::InvalidInput(_))));
    other = cfg.clone();
    other.certify.seed += 1;
    assert!(matches!(pipeline::certify_policy(&other), Err(Error::InvalidInput(_))));

    let dir2 = tempfile::tempdir().unwrap();
    let fresh = common::small(dir2.path());
    assert!(matches!(pipeline::train(&fresh), Err(Error::InvalidInput(_))));
    assert!(matches!(pipeline::report(&fresh), Err(Error::InvalidInput(_))));
}

#[test]
fn report_collects_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small(dir.path());
    pipeline::gen_data(&cfg).unwrap();
    pipeline::train(&cfg).unwrap();
    pipeline::certify_policy(&cfg).unwrap();
    let cert = pipeline::certify_action(&cfg).unwrap();
    let rep = pipeline::report(&cfg).unwrap();
    assert_eq!(rep.config_hash, cfg.hash());
    assert_eq!(rep.policy_curve.len(), 2 * cfg.certify.r_range.len());
    assert_eq!(rep.stability, cert.stability);
    let svg = std::fs::read_to_string(dir.path().join(pipeline::POLICY_SVG)).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("x-label") && svg.contains("y-label"));
}
