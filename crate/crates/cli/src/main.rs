//! `dpcert`: command-line driver for the certification pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use dpcert::harness::{pipeline, ExperimentConfig};
use dpcert::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    GenData,
    Train,
    CertifyPolicy,
    CertifyAction,
    Attack,
    EvalSoundness,
    Report,
    GoldenAccountant,
}

/// Trains private offline-RL ensembles and certifies them against data
/// poisoning. Any config field can be overridden with `--dotted.path=value`.
#[derive(Debug, Parser)]
#[command(name = "dpcert", version)]
struct Cli {
    #[arg(value_enum)]
    stage: Stage,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; replaces `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

const EXIT_USAGE: u8 = 1;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::InvalidInput(_) | Error::Format(_) | Error::Io(_) | Error::Json(_) | Error::Csv(_) => 3,
        Error::Numeric(_) | Error::NoGuarantee(_) => 4,
        Error::Assertion(_) => 5,
    }
}

fn kind_name(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::InvalidInput(_) => "input",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
        Error::Numeric(_) => "numeric",
        Error::NoGuarantee(_) => "no_guarantee",
        Error::Assertion(_) => "assertion",
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let line = serde_json::json!({ "error": kind, "message": message, "exit_code": code });
    eprintln!("{line}");
    ExitCode::from(code)
}

type Overrides = Vec<(String, String)>;

/// Splits `--a.b=value` overrides from the arguments clap parses.
fn split_overrides(args: Vec<String>) -> Result<(Vec<String>, Overrides), String> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    for arg in args {
        match arg.strip_prefix("--").and_then(|a| a.split_once('=')) {
            Some((key, value)) if key.contains('.') || !["config", "seed", "out"].contains(&key) => {
                if key.is_empty() {
                    return Err(format!("empty override key in {arg:?}"));
                }
                overrides.push((key.to_string(), value.to_string()));
            }
            _ => rest.push(arg),
        }
    }
    Ok((rest, overrides))
}

fn run(stage: Stage, cfg: &ExperimentConfig) -> dpcert::Result<String> {
    Ok(match stage {
        Stage::GenData => {
            let ds = pipeline::gen_data(cfg)?;
            format!("wrote {} trajectories ({} transitions)", ds.n_trajectories(), ds.n_transitions())
        }
        Stage::Train => {
            let ens = pipeline::train(cfg)?;
            format!("trained {} instances", ens.p())
        }
        Stage::CertifyPolicy => {
            let curve = pipeline::certify_policy(cfg)?;
            format!("J_lower = {} from m = {} rollouts", curve.clean.j_lower(), curve.clean.m)
        }
        Stage::CertifyAction => {
            let cert = pipeline::certify_action(cfg)?;
            format!("certified {} episodes", cert.episodes.len())
        }
        Stage::Attack => format!("wrote {} attacked datasets", pipeline::attack(cfg)?.len()),
        Stage::EvalSoundness => {
            let rows = pipeline::eval_soundness(cfg)?;
            format!("{} trials, all at or above the certified bound", rows.len())
        }
        Stage::Report => {
            let rep = pipeline::report(cfg)?;
            format!("report for config {}", rep.config_hash)
        }
        Stage::GoldenAccountant => format!("wrote {}", pipeline::golden_accountant(cfg)?.display()),
    })
}

fn main() -> ExitCode {
    let (args, mut overrides) = match split_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(msg) => return fail("usage", &msg, EXIT_USAGE),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim(), EXIT_USAGE),
    };
    if let Some(out) = &cli.out {
        let quoted = serde_json::to_string(&out.to_string_lossy()).expect("string serializes");
        overrides.push(("output".to_string(), quoted));
    }
    let cfg = match ExperimentConfig::from_path(&cli.config, &overrides, cli.seed) {
        Ok(c) => c,
        Err(e) => return fail(kind_name(&e), &e.to_string(), exit_code(&e)),
    };
    match run(cli.stage, &cfg) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(kind_name(&e), &e.to_string(), exit_code(&e)),
    }
}
