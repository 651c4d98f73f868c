use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, SweepVariable};
use super::seeds::{stream, Purpose};
use super::trial::{Scenario, TrialOutcome};
use crate::error::{Error, Result};
use crate::estimator::BeamSelection;
use crate::metrics::{pdp, rate_bounds};

const Z_95: f64 = 1.959_964;

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub variable: String,
    pub value: f64,
    pub scheme: String,
    pub trials: usize,
    pub successes: usize,
    pub p_d: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl ResultRow {
    pub fn new(variable: &str, value: f64, scheme: &str, successes: usize, trials: usize) -> Self {
        let (ci_low, ci_high) = wilson_interval(successes, trials);
        ResultRow {
            variable: variable.to_string(),
            value,
            scheme: scheme.to_string(),
            trials,
            successes,
            p_d: successes as f64 / trials as f64,
            ci_low,
            ci_high,
        }
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointTiming {
    pub variable: String,
    pub value: f64,
    pub mean_runtime_ms: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<PointTiming>,
}

pub(crate) fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start {workers} workers: {e}")))
}

/// Run trials 0..n of one scenario, in parallel, returned in trial order.
pub fn run_trials(scenario: &Scenario, trials: usize, pool: &rayon::ThreadPool) -> Result<Vec<TrialOutcome>> {
    pool.install(|| {
        (0..trials as u64)
            .into_par_iter()
            .map(|t| scenario.run_trial(t))
            .collect()
    })
}

/// Detection probability at every sweep point. Each point reuses trial
/// indices 0..trials, so points share geometry, fading and noise streams.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let pool = pool(config.workers)?;
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for (variable, value, point) in config.points()? {
        let scenario = Scenario::new(&point)?;
        let start = Instant::now();
        let outcomes = run_trials(&scenario, point.trials, &pool)?;
        timings.push(PointTiming {
            variable: variable.to_string(),
            value,
            mean_runtime_ms: start.elapsed().as_secs_f64() * 1e3 / point.trials as f64,
        });
        let count = |pick: fn(&TrialOutcome) -> Option<bool>| outcomes.iter().filter_map(pick).filter(|&s| s).count();
        if point.scheme.runs_nnls() {
            let s = count(|o| o.nnls.as_ref().map(|d| d.success));
            rows.push(ResultRow::new(variable, value, "nnls", s, point.trials));
        }
        if point.scheme.runs_omp() {
            let s = count(|o| o.omp.as_ref().map(|d| d.success));
            rows.push(ResultRow::new(variable, value, "omp", s, point.trials));
        }
    }
    Ok(SweepResult { rows, timings })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub snr_bbf_db: f64,
    pub r_ub: f64,
    pub r_lb: f64,
    pub selected_path: usize,
}

/// SNR points of the rate experiment: the sweep values if sweeping SNR,
/// else −30…20 dB in 5 dB steps.
fn rate_snr_points(config: &ExperimentConfig) -> Result<Vec<f64>> {
    match &config.sweep {
        Some(s) if s.variable == SweepVariable::SnrBbfDb => Ok(s.values.clone()),
        Some(s) => Err(Error::config(format!(
            "the rate experiment sweeps snr_bbf_db, not {}",
            s.variable.name()
        ))),
        None => Ok((-6..=4).map(|k| 5.0 * k as f64).collect()),
    }
}

/// Geometry of trial 0 with clusters expanded, and the LOS grid beams.
fn reference_link(scenario: &Scenario) -> (Vec<crate::channel::PathParams>, BeamSelection) {
    let clusters = scenario.geometry(0);
    let (n, m) = scenario.los_cell(&clusters);
    let mut rng = stream(scenario.config.seed, 0, Purpose::Fading);
    let paths = clusters.iter().flat_map(|c| c.expand(&mut rng)).collect();
    (
        paths,
        BeamSelection {
            ue_index: n,
            bs_index: m,
            strength: 1.0,
        },
    )
}

/// Ergodic rate bounds after alignment on the LOS beams, per SNR point.
pub fn run_rate_experiment(config: &ExperimentConfig) -> Result<Vec<RateRow>> {
    config.validate()?;
    let points = rate_snr_points(config)?;
    let pool = pool(config.workers)?;
    pool.install(|| {
        points
            .par_iter()
            .map(|&snr| {
                let scenario = Scenario::new(&config.at(SweepVariable::SnrBbfDb, snr)?)?;
                let (paths, sel) = reference_link(&scenario);
                let mut rng = stream(config.seed, 0, Purpose::Ergodic);
                let r = rate_bounds(&paths, &config.system, &sel, &scenario.power, config.rate_draws, &mut rng)?;
                Ok(RateRow {
                    snr_bbf_db: snr,
                    r_ub: r.r_ub,
                    r_lb: r.r_lb,
                    selected_path: r.selected_path,
                })
            })
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdpRow {
    pub tap: usize,
    pub delay_s: f64,
    pub before_ba: f64,
    pub after_ba: f64,
}

/// Tap energies before alignment (single antennas) and after alignment (LOS
/// grid beams), both at the configured SNR.
pub fn run_pdp_experiment(config: &ExperimentConfig) -> Result<Vec<PdpRow>> {
    let mut point = config.clone();
    point.sweep = None;
    let scenario = Scenario::new(&point)?;
    let (paths, sel) = reference_link(&scenario);
    let draw_rng = || stream(config.seed, 0, Purpose::Ergodic);
    let before = pdp(&paths, &config.system, None, &scenario.power, config.pdp_draws, &mut draw_rng())?;
    let after = pdp(&paths, &config.system, Some(&sel), &scenario.power, config.pdp_draws, &mut draw_rng())?;
    let t_d = 1.0 / config.system.bandwidth_hz;
    Ok(before
        .taps
        .iter()
        .zip(&after.taps)
        .enumerate()
        .map(|(tap, (&b, &a))| PdpRow {
            tap,
            delay_s: tap as f64 * t_d,
            before_ba: b,
            after_ba: a,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_matches_closed_form() {
        // p̂ = 0.5, n = 100: center 0.5, half = z·√(0.0025 + z²/40000)/(1 + z²/100).
        let (lo, hi) = wilson_interval(50, 100);
        let z: f64 = 1.959_964;
        let half = z * (0.0025 + z * z / 40000.0).sqrt() / (1.0 + z * z / 100.0);
        assert!((lo - (0.5 - half)).abs() < 1e-12);
        assert!((hi - (0.5 + half)).abs() < 1e-12);
        let (lo, hi) = wilson_interval(0, 20);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.1 && hi < 0.2);
        let (lo, hi) = wilson_interval(20, 20);
        assert!(lo > 0.8 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rows_report_fraction() {
        let r = ResultRow::new("kappa", 8.0, "nnls", 150, 200);
        assert_eq!(r.p_d, 0.75);
        assert!(r.ci_low < 0.75 && r.ci_high > 0.75);
        assert!(r.half_width() > 0.05 && r.half_width() < 0.07);
    }
}
