use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::seeds::{stream, Purpose};
use crate::channel::{
    nearest_grid_index, realize_channel, ChannelRealization, ClusterParams, CoherenceModel, PathParams, SlotPhase,
};
use crate::error::{Error, Result};
use crate::estimator::{estimate_psf, omp_baseline, select_beam, BeamSelection, NnlsOptions};
use crate::frontend::{assemble_measurements, measure_slot, noise_floor, strongest_tap, MeasurementBatch};
use crate::metrics::calibrate_power;
use crate::signaling::{gen_codebook, gen_pn, BeamCodebook, PnSet, PowerConfig, ProbeContext, SignalConfig};

/// A validated config with the derived signal and power settings.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ExperimentConfig,
    pub signal: SignalConfig,
    pub power: PowerConfig,
}

impl Scenario {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let mut config = config.clone();
        config.sweep = None;
        config.validate()?;
        let nominal: Vec<PathParams> = config.paths.iter().map(|p| nominal_path(p, 0.0, 0.0)).collect();
        let total_power_w = calibrate_power(
            config.snr_bbf_db,
            &nominal,
            config.noise_psd_w_per_hz,
            config.system.bandwidth_hz,
        )?;
        Ok(Scenario {
            signal: config.signal(),
            power: PowerConfig {
                total_power_w,
                noise_psd_w_per_hz: config.noise_psd_w_per_hz,
            },
            config,
        })
    }

    /// Cluster list for one trial, with missing angles drawn from the
    /// trial's geometry stream.
    pub fn geometry(&self, trial: u64) -> Vec<ClusterParams> {
        let cfg = &self.config;
        let mut rng = stream(cfg.seed, trial, Purpose::Geometry);
        cfg.paths
            .iter()
            .enumerate()
            .map(|(k, spec)| {
                let mut draw = |count: usize| {
                    if k == 0 {
                        let cell = rng.random_range(0..count);
                        (2.0 * cell as f64 / count as f64 - 1.0).asin()
                    } else {
                        rng.random_range(-1.0..1.0f64).asin()
                    }
                };
                let aoa = spec.aoa_rad.unwrap_or_else(|| draw(cfg.system.ue_antennas));
                let aod = spec.aod_rad.unwrap_or_else(|| draw(cfg.system.bs_antennas));
                ClusterParams {
                    center: nominal_path(spec, aoa.clamp(-FRAC_PI_2, FRAC_PI_2), aod.clamp(-FRAC_PI_2, FRAC_PI_2)),
                    angular_spread: spec.angular_spread_rad,
                    subpath_count: spec.subpaths,
                }
            })
            .collect()
    }

    /// Grid cell (n, m) of the LOS reference path.
    pub fn los_cell(&self, clusters: &[ClusterParams]) -> (usize, usize) {
        let los = &clusters[0].center;
        (
            nearest_grid_index(los.aoa, self.config.system.ue_antennas),
            nearest_grid_index(los.aod, self.config.system.bs_antennas),
        )
    }

    fn codebook(&self, trial: u64) -> Result<BeamCodebook> {
        let cfg = &self.config;
        let mut rng = match cfg.codebook_seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => stream(cfg.seed, trial, Purpose::Codebook),
        };
        gen_codebook(&cfg.system, self.signal.beacon_slots, cfg.kappa_u, cfg.kappa_v, &mut rng)
    }

    fn pn(&self, trial: u64) -> Result<PnSet> {
        let cfg = &self.config;
        let mut rng = match cfg.pn_seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => stream(cfg.seed, trial, Purpose::Pn),
        };
        gen_pn(cfg.system.bs_rf_chains, self.signal.chips_per_sequence, &mut rng)
    }

    pub fn realize(&self, clusters: &[ClusterParams], trial: u64) -> Result<ChannelRealization> {
        let cfg = &self.config;
        let slots = self.signal.beacon_slots;
        let (coherence, phase) = match cfg.coherence {
            CoherenceModel::Fast => (1, SlotPhase::Iid),
            CoherenceModel::Slow => (
                slots,
                SlotPhase::Continuous {
                    slot_duration_s: cfg.slot_period(),
                },
            ),
        };
        let mut rng = stream(cfg.seed, trial, Purpose::Fading);
        realize_channel(clusters, cfg.system.carrier_hz, slots, coherence, phase, &mut rng)
    }

    /// Run the probing phase of one trial.
    pub fn simulate(&self, trial: u64, keep_coherent: bool) -> Result<TrialData> {
        self.simulate_inner(trial, keep_coherent).map_err(|e| e.in_trial(trial))
    }

    fn simulate_inner(&self, trial: u64, keep_coherent: bool) -> Result<TrialData> {
        let cfg = &self.config;
        let clusters = self.geometry(trial);
        let truth = self.los_cell(&clusters);
        let realization = self.realize(&clusters, trial)?;
        let codebook = self.codebook(trial)?;
        let pn = self.pn(trial)?;
        let ctx = ProbeContext::new(
            &cfg.system,
            &self.signal,
            &pn,
            &codebook,
            &self.power,
            &realization,
            cfg.separation,
        )?;
        let mut rng = stream(cfg.seed, trial, Purpose::Noise);
        let mut q = Vec::with_capacity(codebook.slots * cfg.system.bs_rf_chains * cfg.system.ue_rf_chains);
        let mut coherent = Vec::new();
        for s in 0..self.signal.beacon_slots {
            let m = measure_slot(&ctx.slot(s), &pn, self.signal.sequences_per_slot, &mut rng)?;
            q.extend(m.energy);
            if keep_coherent {
                coherent.extend(m.coherent);
            }
        }
        let floor = noise_floor(&self.signal, cfg.noise_psd_w_per_hz);
        let batch = assemble_measurements(&q, &codebook, floor)?;
        let omp_y = keep_coherent.then(|| {
            let taps = self.signal.correlation_taps;
            let profile: Vec<f64> = (0..taps)
                .map(|k| coherent.iter().map(|row: &Vec<Complex64>| row[k].norm_sqr()).sum())
                .collect();
            let k = strongest_tap(&profile);
            coherent.iter().map(|row| row[k]).collect()
        });
        Ok(TrialData {
            realization,
            clusters,
            truth,
            codebook,
            batch,
            omp_y,
        })
    }

    /// Full trial: probe, estimate with the configured scheme(s), compare
    /// against the LOS cell.
    pub fn run_trial(&self, trial: u64) -> Result<TrialOutcome> {
        let scheme = self.config.scheme;
        let data = self.simulate(trial, scheme.runs_omp())?;
        let nnls = if scheme.runs_nnls() {
            let opts = NnlsOptions {
                tol: self.config.nnls_tol,
                max_iter: None,
            };
            let est = estimate_psf(&data.batch, &opts).map_err(|e| e.in_trial(trial))?;
            let sel = detection(select_beam(&est.gamma_star)).map_err(|e| e.in_trial(trial))?;
            Some(Detection::new(sel, data.truth, Some(est.residual_norm), est.iterations, est.converged, false))
        } else {
            None
        };
        let omp = match &data.omp_y {
            Some(y) => {
                let scale = 1.0 / ((self.config.kappa_u * self.config.kappa_v) as f64).sqrt();
                let dict = &data.batch.b * scale;
                let out = detection(omp_baseline(y, &dict, self.config.sparsity(), self.config.system.ue_antennas))
                    .map_err(|e| e.in_trial(trial))?;
                let sel = out.as_ref().map(|o| o.selection);
                let reg = out.as_ref().is_some_and(|o| o.regularized);
                let iters = out.as_ref().map_or(0, |o| o.support.len());
                Some(Detection::new(sel, data.truth, None, iters, true, reg))
            }
            None => None,
        };
        Ok(TrialOutcome {
            trial,
            truth: data.truth,
            nnls,
            omp,
        })
    }
}

/// A "no detection" outcome is a failed trial, not an error.
fn detection<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::NoDetection(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub(crate) fn nominal_path(spec: &super::config::PathSpec, aoa: f64, aod: f64) -> PathParams {
    PathParams {
        gamma: spec.gamma,
        eta: spec.eta.unwrap_or(f64::INFINITY),
        aoa,
        aod,
        delay_s: spec.delay_s,
        rel_speed_mps: spec.rel_speed_mps,
    }
}

/// Everything produced by the probing phase of one trial.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub realization: ChannelRealization,
    pub clusters: Vec<ClusterParams>,
    pub truth: (usize, usize),
    pub codebook: BeamCodebook,
    pub batch: MeasurementBatch,
    /// Peak-tap complex outputs in (s, i, j) order, kept for OMP.
    pub omp_y: Option<Vec<Complex64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub success: bool,
    pub selected: Option<(usize, usize)>,
    /// NNLS residual; not reported for OMP.
    pub residual_norm: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub regularized: bool,
}

impl Detection {
    fn new(
        sel: Option<BeamSelection>,
        truth: (usize, usize),
        residual_norm: Option<f64>,
        iterations: usize,
        converged: bool,
        regularized: bool,
    ) -> Self {
        let selected = sel.map(|s| s.cell());
        Detection {
            success: selected == Some(truth),
            selected,
            residual_norm,
            iterations,
            converged,
            regularized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub truth: (usize, usize),
    pub nnls: Option<Detection>,
    pub omp: Option<Detection>,
}
