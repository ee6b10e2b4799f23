#![allow(dead_code)]

use std::path::{Path, PathBuf};

use dpcert::harness::ExperimentConfig;

pub fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// A pinned config from `configs/`, writing into `out`.
pub fn pinned(name: &str, out: &Path) -> ExperimentConfig {
    let out = serde_json::to_string(&out.to_string_lossy()).unwrap();
    ExperimentConfig::from_path(&config_path(name), &[("output".into(), out)], None).unwrap()
}

pub const SMALL: &str = r#"{
    "env": {"width": 3, "height": 3, "start_cell": 0, "goal_cells": {"8": 1.0}, "pit_cells": {},
            "step_reward": 0.0, "slip_prob": 0.1, "horizon": 10, "discount": 0.9},
    "data": {"M": 200, "behavior_epsilon": 0.3, "seed": 1},
    "train": {"trainer": {"algorithm": "sgm", "sample_rate": 0.02, "noise_multiplier": 1.5,
              "clip_norm": 0.05, "iterations": 300, "learning_rate": 0.5}, "p": 6, "seed": 2},
    "certify": {"delta_conf": 0.01, "alpha_conf": 0.01, "r_range": [0, 1, 2, 3, 5, 10],
                "rollouts_per_instance": 10, "episodes": 2, "seed": 3},
    "attacks": [{"kind": "adversarial_reward", "level": "trajectory", "r": 2, "seed": 5}],
    "soundness": {"trials": 2, "seed": 4},
    "output": "out"
}"#;

pub fn small(out: &Path) -> ExperimentConfig {
    let out = serde_json::to_string(&out.to_string_lossy()).unwrap();
    ExperimentConfig::load(SMALL, &[("output".into(), out)], None).unwrap()
}
