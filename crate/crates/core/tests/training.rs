mod common;

use dpcert::cert::policy::collect_returns;
use dpcert::mdp::{generate_dataset, value_iteration, Dataset};
use dpcert::rng::{child_stream, stream};
use dpcert::train::{dp_fedavg_train, td_gradient, train_ensemble, FedAvgConfig, FeatureMap, LinearQ};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn desk_sgm_reaches_training_floor() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::pinned("desk.json", dir.path());
    let ds = generate_dataset(&cfg.env, &cfg.behavior(), cfg.data.trajectories, &mut stream(cfg.data.seed)).unwrap();
    let ens = train_ensemble(&ds, cfg.feature_map(), 4, &cfg.train.trainer, 20, cfg.train.seed, true).unwrap();
    let optimum = value_iteration(&cfg.env, 1e-12).max_value(cfg.env.start_cell);
    let achieved = mean(&collect_returns(&ens, &cfg.env, 50, 99).unwrap());
    println!("greedy return {achieved:.4} vs optimum {optimum:.4}");
    assert!(achieved >= 0.6 * optimum, "{achieved} < 0.6 * {optimum}");
}

#[test]
fn desk_instances_differ() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::pinned("desk.json", dir.path());
    let ds = generate_dataset(&cfg.env, &cfg.behavior(), cfg.data.trajectories, &mut stream(cfg.data.seed)).unwrap();
    let p = 50;
    let ens = train_ensemble(&ds, cfg.feature_map(), 4, &cfg.train.trainer, p, cfg.train.seed, true).unwrap();
    let returns = collect_returns(&ens, &cfg.env, 20, 5).unwrap();
    let per_instance: Vec<f64> =
        (0..p).map(|i| mean(&returns.iter().skip(i).step_by(p).copied().collect::<Vec<_>>())).collect();
    let m = mean(&per_instance);
    let var = per_instance.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (p - 1) as f64;
    assert!(var > 0.0);
}

fn toy_dataset(trajectories: usize, seed: u64) -> Dataset {
    let env = common::small(std::path::Path::new("unused")).env;
    generate_dataset(&env, &Default::default(), trajectories, &mut stream(seed)).unwrap()
}

fn fedavg(sample_rate: f64, sigma: f64, rounds: usize) -> FedAvgConfig {
    FedAvgConfig {
        sample_rate,
        noise_multiplier: sigma,
        clip_norm: 0.7,
        clip: true,
        local_epochs: 2,
        batch_size: 3,
        learning_rate: 0.4,
        outer_iterations: rounds,
        discount: None,
        trajectory_count: None,
        target_refresh: 2,
    }
}

#[test]
fn fedavg_noise_has_the_stated_scale() {
    let mut ds = toy_dataset(10, 3);
    for t in ds.trajectories.iter_mut() {
        for s in t.steps.iter_mut() {
            s.reward = 0.0;
        }
    }
    let cfg = fedavg(0.5, 1.3, 1);
    let fm = FeatureMap::OneHot { n_states: 9 };
    let reps = 10_000;
    let draws: Vec<f64> =
        (0..reps).map(|i| dp_fedavg_train(&ds, fm, 4, &cfg, &mut child_stream(17, i)).unwrap().weights[5]).collect();
    let m = mean(&draws);
    let sd = (draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    let expected = cfg.noise_multiplier * cfg.clip_norm / (cfg.sample_rate * 10.0);
    assert!((sd / expected - 1.0).abs() < 0.05, "sd {sd} vs {expected}");
}

/// Plain federated averaging written independently: every client trains
/// locally from the global model and the server averages the deltas.
fn plain_fedavg(ds: &Dataset, cfg: &FedAvgConfig, fm: FeatureMap) -> Vec<f64> {
    let mut global = LinearQ::zeros(fm, 4);
    let mut target = global.clone();
    let k = ds.n_trajectories() as f64;
    for round in 0..cfg.outer_iterations {
        if round % cfg.target_refresh == 0 {
            target = global.clone();
        }
        let mut avg = vec![0.0; global.weights.len()];
        for traj in &ds.trajectories {
            let mut local = global.clone();
            for _ in 0..cfg.local_epochs {
                for batch in traj.steps.chunks(cfg.batch_size) {
                    let mut g = vec![0.0; local.weights.len()];
                    for tr in batch {
                        for (gi, d) in g.iter_mut().zip(td_gradient(&local, &target, tr, ds.meta.gamma).unwrap()) {
                            *gi += d / batch.len() as f64;
                        }
                    }
                    for (w, gi) in local.weights.iter_mut().zip(g) {
                        *w -= cfg.learning_rate * gi;
                    }
                }
            }
            for ((a, l), g) in avg.iter_mut().zip(&local.weights).zip(&global.weights) {
                *a += (l - g) / k;
            }
        }
        for (w, a) in global.weights.iter_mut().zip(avg) {
            *w += a;
        }
    }
    global.weights
}

#[test]
fn unclipped_noiseless_fedavg_matches_plain_averaging() {
    let ds = toy_dataset(3, 8);
    let fm = FeatureMap::OneHot { n_states: 9 };
    let mut cfg = fedavg(1.0, 0.0, 5);
    cfg.clip = false;
    let got = dp_fedavg_train(&ds, fm, 4, &cfg, &mut stream(0)).unwrap();
    let want = plain_fedavg(&ds, &cfg, fm);
    assert!(want.iter().any(|w| w.abs() > 1e-6), "toy run must move the weights");
    for (a, b) in got.weights.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}
