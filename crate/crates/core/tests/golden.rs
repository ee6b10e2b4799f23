//! Byte-level fixtures for the pinned desk config. Set `DPCERT_BLESS=1` to
//! rewrite them after an intended change.

mod common;

use std::path::PathBuf;

use dpcert::accountant::{write_golden_csv, Accountant, FamilyKind};
use dpcert::harness::pipeline;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn compare(name: &str, bytes: &[u8]) {
    let path = fixture(name);
    if std::env::var_os("DPCERT_BLESS").is_some() {
        std::fs::write(&path, bytes).unwrap();
    }
    let want = std::fs::read(&path).unwrap();
    assert!(want == bytes, "{} differs from the regenerated output", path.display());
}

#[test]
fn desk_accountant_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::pinned("desk.json", dir.path());
    let acc = Accountant::new(cfg.train.trainer.accountant_inputs()).unwrap();
    let radii: Vec<u32> = cfg.certify.r_range.iter().copied().filter(|&r| r > 0).collect();
    let mut buf = Vec::new();
    write_golden_csv(&mut buf, &acc, &radii, &cfg.certify.delta_grid).unwrap();
    compare("desk_golden_accountant.csv", &buf);

    for kind in FamilyKind::BOTH {
        assert!(!acc.family(10, kind, &cfg.certify.delta_grid).unwrap().is_empty());
    }
    // the CLI subcommand writes the same bytes
    let path = pipeline::golden_accountant(&cfg).unwrap();
    assert_eq!(std::fs::read(path).unwrap(), buf);
}

#[test]
fn desk_policy_curve_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::pinned("desk.json", dir.path());
    pipeline::gen_data(&cfg).unwrap();
    pipeline::train(&cfg).unwrap();
    pipeline::certify_policy(&cfg).unwrap();
    compare("desk_policy_cert.csv", &std::fs::read(dir.path().join(pipeline::POLICY_CSV)).unwrap());
}
