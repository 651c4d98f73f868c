//! Seeded Monte Carlo experiments and their on-disk outputs.

mod config;
mod output;
mod seeds;
mod sweep;
mod trial;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{
    ExperimentConfig, PathSpec, Scheme, Sweep, SweepVariable, BEACON_DURATION_S, THERMAL_NOISE_PSD_W_PER_HZ,
};
pub use output::{csv_body, git_revision, prepare_out_dir, write_csv, RunManifest};
pub use seeds::{stream, Purpose};
pub use sweep::{
    run_pdp_experiment, run_rate_experiment, run_sweep, run_trials, wilson_interval, PdpRow, PointTiming, RateRow,
    ResultRow, SweepResult,
};
pub use trial::{Detection, Scenario, TrialData, TrialOutcome};

use crate::error::{Error, Result};
use crate::frontend::write_matrix_market;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Detection,
    Rate,
    Pdp,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Detection => "detection",
            ExperimentKind::Rate => "rate",
            ExperimentKind::Pdp => "pdp",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: RunManifest,
}

/// Run one experiment and write `<kind>.csv` and `<kind>_manifest.json`
/// into the config's output directory, which is checked first.
pub fn run_experiment(config: &ExperimentConfig, kind: ExperimentKind) -> Result<RunSummary> {
    config.validate()?;
    prepare_out_dir(&config.out_dir)?;
    let hash = config.hash();
    let csv_path = config.out_dir.join(format!("{}.csv", kind.name()));
    let start = Instant::now();
    let points = match kind {
        ExperimentKind::Detection => {
            let res = run_sweep(config)?;
            write_csv(&csv_path, &hash, &res.rows)?;
            res.timings
        }
        ExperimentKind::Rate => {
            write_csv(&csv_path, &hash, &run_rate_experiment(config)?)?;
            Vec::new()
        }
        ExperimentKind::Pdp => {
            write_csv(&csv_path, &hash, &run_pdp_experiment(config)?)?;
            Vec::new()
        }
    };
    let manifest = RunManifest {
        experiment: kind.name().to_string(),
        config_sha256: hash,
        seed: config.seed,
        git_revision: git_revision(),
        wall_time_s: start.elapsed().as_secs_f64(),
        workers: config.workers,
        trials: config.trials,
        outputs: vec![csv_path.clone()],
        points,
    };
    let manifest_path = config.out_dir.join(format!("{}_manifest.json", kind.name()));
    manifest.write(&manifest_path)?;
    Ok(RunSummary {
        csv_path,
        manifest_path,
        manifest,
    })
}

/// Write the (q, B) system of one trial at the first sweep point as Matrix
/// Market text.
pub fn dump_batch(config: &ExperimentConfig, trial: u64, path: &Path) -> Result<()> {
    let (_, _, point) = config.points()?.swap_remove(0);
    let data = Scenario::new(&point)?.simulate(trial, false)?;
    let mut buf = Vec::new();
    write_matrix_market(&data.batch, &mut buf)?;
    std::fs::write(path, buf).map_err(|source| Error::Output {
        path: path.to_path_buf(),
        source,
    })
}
