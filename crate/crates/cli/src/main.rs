use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use tdba_core::harness::{dump_batch, run_experiment, ExperimentConfig, ExperimentKind, Scheme};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Experiment {
    Detection,
    Rate,
    Pdp,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    Nnls,
    Omp,
    Both,
}

/// Run time-domain beam alignment experiments.
#[derive(Debug, Parser)]
#[command(name = "tdba", version)]
struct Args {
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value = "detection")]
    experiment: Experiment,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Also write the (q, B) system of this trial as Matrix Market text.
    #[arg(long, value_name = "TRIAL")]
    dump_batch: Option<u64>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

fn resolve(args: &Args) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = args.trials {
        cfg.trials = trials;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    if let Some(scheme) = args.scheme {
        cfg.scheme = match scheme {
            SchemeArg::Nnls => Scheme::Nnls,
            SchemeArg::Omp => Scheme::Omp,
            SchemeArg::Both => Scheme::Both,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: Args) -> anyhow::Result<()> {
    let cfg = resolve(&args)?;
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg)?);
        return Ok(());
    }
    let kind = match args.experiment {
        Experiment::Detection => ExperimentKind::Detection,
        Experiment::Rate => ExperimentKind::Rate,
        Experiment::Pdp => ExperimentKind::Pdp,
    };
    let summary = run_experiment(&cfg, kind)?;
    if let Some(trial) = args.dump_batch {
        let path = cfg.out_dir.join(format!("batch_trial{trial}.mtx"));
        dump_batch(&cfg, trial, &path)?;
        eprintln!("wrote {}", path.display());
    }
    eprintln!(
        "wrote {} and {} in {:.2} s",
        summary.csv_path.display(),
        summary.manifest_path.display(),
        summary.manifest.wall_time_s
    );
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
