//! Batch front end: JSON experiment configs in, `report.json` plus CSV artifacts out.
//!
//! Exit codes: 0 on success, 2 for invalid configuration, 3 when a numerical
//! routine reports failure, 1 for other I/O errors.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod reproduce;

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use cyclical_core::rng::{GAUSSIAN_TRANSFORM, RNG_ALGORITHM};
use serde::Serialize;
use serde_json::Value;

pub use config::{ExperimentConfig, Mode, ReproduceName};
pub use error::{CliError, CliResult};
use output::OutDir;
use reproduce::Check;

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub version: &'static str,
    pub seed: u64,
    pub rng_algorithm: &'static str,
    pub gaussian_transform: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub wall_seconds: f64,
}

/// Contents of `report.json`. Everything except `timing` is a function of the config.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reproduce: Option<ReproduceName>,
    pub metadata: Metadata,
    pub results: Value,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
    pub files: Vec<String>,
    pub timing: Timing,
}

fn unix_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Runs one experiment and writes its artifacts under `config.out`.
pub fn execute(config: &ExperimentConfig) -> CliResult<Report> {
    let started = unix_ms();
    let clock = Instant::now();
    config.validate()?;
    let (resolved, name) = match (config.mode, config.reproduce) {
        (Mode::Reproduce, Some(name)) => (reproduce::expand(config, name)?, Some(name)),
        _ => (config.clone(), None),
    };
    resolved.validate()?;
    let mut out = OutDir::create(&resolved.out)?;
    let seed = resolved.seed;
    let target = resolved.target.as_ref().map(|t| t.build()).transpose()?;
    let preset = resolved.target.as_ref().and_then(|t| t.preset);
    let results = match resolved.mode {
        Mode::Run => experiments::run(
            resolved.run.as_ref().expect("validated"),
            seed,
            target.as_ref().expect("validated"),
            preset,
            &mut out,
        )?,
        Mode::Spectral => experiments::spectral(
            resolved.spectral.as_ref().expect("validated"),
            seed,
            target.as_ref().expect("validated"),
            &mut out,
        )?,
        Mode::Theorem2 => experiments::theorem2(
            resolved.theorem2.as_ref().expect("validated"),
            seed,
            resolved.replicas,
            target.as_ref().expect("validated"),
            &mut out,
        )?,
        Mode::Lyapunov => experiments::lyapunov(resolved.lyapunov.as_ref().expect("validated"), &mut out)?,
        Mode::Reproduce => unreachable!("expanded above"),
    };
    let checks = name.map(|n| reproduce::checks(n, &results)).unwrap_or_default();
    let mut report = Report {
        config: resolved,
        reproduce: name,
        metadata: Metadata {
            version: env!("CARGO_PKG_VERSION"),
            seed,
            rng_algorithm: RNG_ALGORITHM,
            gaussian_transform: GAUSSIAN_TRANSFORM,
        },
        results,
        checks,
        files: Vec::new(),
        timing: Timing { started_unix_ms: started, finished_unix_ms: 0, wall_seconds: 0.0 },
    };
    report.files = out.files().iter().cloned().chain(["report.json".to_string()]).collect();
    report.timing.finished_unix_ms = unix_ms();
    report.timing.wall_seconds = clock.elapsed().as_secs_f64();
    out.write_json("report.json", &report)?;
    Ok(report)
}

#[derive(Debug, Parser)]
#[command(name = "cyclical", version, about = "Cyclical MCMC experiments and finite-chain spectral checks")]
pub struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Reproduce name when no config is given; otherwise overrides the target preset.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use the full-size experiment parameters for reproduce runs.
    #[arg(long)]
    pub paper_scale: bool,
    /// Monte-Carlo replicas for the theorem2 escape cross-check.
    #[arg(long)]
    pub replicas: Option<usize>,
}

/// Builds the effective config from flags.
pub fn resolve(args: &Args) -> CliResult<ExperimentConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::reproduce(ReproduceName::from_name(name)?),
        (None, None) => return error::invalid("pass --config PATH or --preset NAME"),
    };
    if let (Some(_), Some(name)) = (&args.config, &args.preset) {
        if cfg.mode == Mode::Reproduce {
            cfg.reproduce = Some(ReproduceName::from_name(name)?);
        } else {
            let p = cyclical_core::targets::Preset::from_name(name)?;
            cfg.target = Some(config::TargetSpec::preset(p));
        }
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    cfg.paper_scale |= args.paper_scale;
    if args.replicas.is_some() {
        cfg.replicas = args.replicas;
    }
    Ok(cfg)
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run_cli(args: &Args) -> i32 {
    let outcome = resolve(args).and_then(|cfg| execute(&cfg));
    match outcome {
        Ok(report) => {
            let dir = report.config.out.display();
            println!("wrote {} files to {dir}", report.files.len());
            for c in &report.checks {
                println!("{} {}: {} (expected {})", if c.pass { "ok  " } else { "FAIL" }, c.name, c.value, c.expected);
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
