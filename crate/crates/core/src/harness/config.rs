use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{CoherenceModel, SystemConfig};
use crate::error::{Error, Result};
use crate::signaling::{SignalConfig, StreamSeparation};

/// One propagation path or scatterer cluster. Missing angles are drawn per
/// trial: the first path on a uniformly chosen grid cell, others with a
/// uniformly distributed sine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub gamma: f64,
    /// Rice factor; `null` means a deterministic gain.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub aoa_rad: Option<f64>,
    #[serde(default)]
    pub aod_rad: Option<f64>,
    #[serde(default)]
    pub delay_s: f64,
    #[serde(default)]
    pub rel_speed_mps: f64,
    #[serde(default)]
    pub angular_spread_rad: f64,
    #[serde(default = "one")]
    pub subpaths: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    SnrBbfDb,
    Kappa,
    NC,
    RelSpeedMps,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::SnrBbfDb => "snr_bbf_db",
            SweepVariable::Kappa => "kappa",
            SweepVariable::NC => "n_c",
            SweepVariable::RelSpeedMps => "rel_speed_mps",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Nnls,
    Omp,
    Both,
}

impl Scheme {
    pub fn runs_nnls(self) -> bool {
        matches!(self, Scheme::Nnls | Scheme::Both)
    }

    pub fn runs_omp(self) -> bool {
        matches!(self, Scheme::Omp | Scheme::Both)
    }
}

/// Everything one experiment needs. Physical quantities carry their unit in
/// the key name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub chips_per_sequence: usize,
    /// Chip rate; defaults to the system bandwidth.
    pub signal_bandwidth_hz: Option<f64>,
    pub beacon_duration_s: f64,
    /// Spacing between beacon slot starts; defaults to the beacon duration.
    pub slot_period_s: Option<f64>,
    /// Defaults to as many sequences as fit in one beacon.
    pub sequences_per_slot: Option<usize>,
    pub beacon_slots: usize,
    /// Defaults to N_c plus the largest path delay in chips.
    pub correlation_taps: Option<usize>,
    pub kappa_u: usize,
    pub kappa_v: usize,
    pub snr_bbf_db: f64,
    pub noise_psd_w_per_hz: f64,
    pub paths: Vec<PathSpec>,
    pub coherence: CoherenceModel,
    pub separation: StreamSeparation,
    pub scheme: Scheme,
    /// OMP iterations; defaults to the number of paths.
    pub omp_sparsity: Option<usize>,
    pub nnls_tol: f64,
    pub sweep: Option<Sweep>,
    pub trials: usize,
    pub seed: u64,
    /// Fix the codebook across trials instead of drawing one per trial.
    pub codebook_seed: Option<u64>,
    /// Fix the PN sequences across trials.
    pub pn_seed: Option<u64>,
    pub rate_draws: usize,
    pub pdp_draws: usize,
    pub workers: usize,
    pub out_dir: PathBuf,
}

pub const BEACON_DURATION_S: f64 = 1.891e-6;
pub const THERMAL_NOISE_PSD_W_PER_HZ: f64 = 1.380_649e-23 * 290.0;

impl Default for ExperimentConfig {
    fn default() -> Self {
        let bandwidth_hz = 1.76e9;
        let chip_s = 1.0 / bandwidth_hz;
        let nlos = |gamma, eta: f64, delay_chips: f64, speed| PathSpec {
            gamma,
            eta: Some(eta),
            aoa_rad: None,
            aod_rad: None,
            delay_s: delay_chips * chip_s,
            rel_speed_mps: speed,
            angular_spread_rad: 3f64.to_radians(),
            subpaths: 4,
        };
        ExperimentConfig {
            system: SystemConfig {
                bs_antennas: 32,
                ue_antennas: 32,
                bs_rf_chains: 3,
                ue_rf_chains: 2,
                carrier_hz: 70e9,
                bandwidth_hz,
            },
            chips_per_sequence: 64,
            signal_bandwidth_hz: None,
            beacon_duration_s: BEACON_DURATION_S,
            slot_period_s: None,
            sequences_per_slot: None,
            beacon_slots: 30,
            correlation_taps: None,
            kappa_u: 8,
            kappa_v: 8,
            snr_bbf_db: -14.0,
            noise_psd_w_per_hz: THERMAL_NOISE_PSD_W_PER_HZ,
            paths: vec![
                PathSpec {
                    gamma: 1.0,
                    eta: Some(100.0),
                    aoa_rad: None,
                    aod_rad: None,
                    delay_s: 0.0,
                    rel_speed_mps: 5.0,
                    angular_spread_rad: 0.0,
                    subpaths: 1,
                },
                nlos(0.6, 10.0, 4.0, 3.0),
                nlos(0.6, 0.0, 9.0, 7.0),
            ],
            coherence: CoherenceModel::Fast,
            separation: StreamSeparation::Simulated,
            scheme: Scheme::Nnls,
            omp_sparsity: None,
            nnls_tol: 1e-10,
            sweep: None,
            trials: 200,
            seed: 1,
            codebook_seed: None,
            pn_seed: None,
            rate_draws: 2000,
            pdp_draws: 2000,
            workers: 1,
            out_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Output {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn chip_rate_hz(&self) -> f64 {
        self.signal_bandwidth_hz.unwrap_or(self.system.bandwidth_hz)
    }

    /// Largest path delay in whole chips.
    pub fn max_delay_chips(&self) -> usize {
        let chip_s = 1.0 / self.chip_rate_hz();
        self.paths
            .iter()
            .map(|p| (p.delay_s / chip_s).round() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn signal(&self) -> SignalConfig {
        let rate = self.chip_rate_hz();
        let n_c = self.chips_per_sequence;
        SignalConfig {
            chips_per_sequence: n_c,
            signal_bandwidth_hz: rate,
            sequences_per_slot: self
                .sequences_per_slot
                .unwrap_or_else(|| SignalConfig::sequences_for_beacon(self.beacon_duration_s, rate, n_c)),
            beacon_slots: self.beacon_slots,
            correlation_taps: self
                .correlation_taps
                .unwrap_or_else(|| SignalConfig::min_taps(n_c, self.max_delay_chips())),
        }
    }

    pub fn slot_period(&self) -> f64 {
        self.slot_period_s.unwrap_or(self.beacon_duration_s)
    }

    pub fn sparsity(&self) -> usize {
        self.omp_sparsity.unwrap_or(self.paths.len())
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.paths.is_empty() {
            return Err(Error::config("at least one path is required; the first is the LOS reference"));
        }
        for (k, p) in self.paths.iter().enumerate() {
            let finite_or_none = |v: Option<f64>| v.is_none_or(f64::is_finite);
            if !(p.gamma >= 0.0)
                || p.eta.is_some_and(|e| !(e >= 0.0))
                || !finite_or_none(p.aoa_rad)
                || !finite_or_none(p.aod_rad)
                || !(p.delay_s >= 0.0)
                || !p.rel_speed_mps.is_finite()
                || !(p.angular_spread_rad >= 0.0)
                || p.subpaths == 0
            {
                return Err(Error::config(format!("path {k} has invalid parameters")));
            }
        }
        if !(self.beacon_duration_s > 0.0) || self.slot_period_s.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::config("beacon duration and slot period must be positive"));
        }
        if !(self.noise_psd_w_per_hz > 0.0) || !self.snr_bbf_db.is_finite() || !(self.nnls_tol > 0.0) {
            return Err(Error::config("noise density and NNLS tolerance must be positive, SNR finite"));
        }
        if self.kappa_u == 0
            || self.kappa_u > self.system.bs_antennas
            || self.kappa_v == 0
            || self.kappa_v > self.system.ue_antennas
        {
            return Err(Error::config("spreading factors must lie in [1, M] and [1, N]"));
        }
        if self.sparsity() == 0 || self.rate_draws == 0 || self.pdp_draws == 0 {
            return Err(Error::config("OMP sparsity and draw counts must be at least 1"));
        }
        self.signal().validate(&self.system, self.max_delay_chips())?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::config("sweep values must not be empty"));
            }
            for &v in &sweep.values {
                self.at(sweep.variable, v)?.validate_point()?;
            }
        }
        Ok(())
    }

    fn validate_point(&self) -> Result<()> {
        let mut point = self.clone();
        point.sweep = None;
        point.validate()
    }

    /// Copy of this config with one sweep variable set to `value`.
    pub fn at(&self, variable: SweepVariable, value: f64) -> Result<Self> {
        let mut c = self.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::config(format!("{} must be a positive integer, got {v}", variable.name())))
            }
        };
        match variable {
            SweepVariable::SnrBbfDb => c.snr_bbf_db = value,
            SweepVariable::Kappa => {
                c.kappa_u = count(value)?;
                c.kappa_v = c.kappa_u;
            }
            SweepVariable::NC => c.chips_per_sequence = count(value)?,
            SweepVariable::RelSpeedMps => c.paths[0].rel_speed_mps = value,
        }
        c.sweep = None;
        Ok(c)
    }

    /// Sweep points as (variable name, value, config) triples; a config
    /// without a sweep is one point.
    pub fn points(&self) -> Result<Vec<(&'static str, f64, ExperimentConfig)>> {
        match &self.sweep {
            None => Ok(vec![("snr_bbf_db", self.snr_bbf_db, self.clone())]),
            Some(s) => s
                .values
                .iter()
                .map(|&v| Ok((s.variable.name(), v, self.at(s.variable, v)?)))
                .collect(),
        }
    }

    /// SHA-256 over the canonical JSON with run-only fields (worker count,
    /// output directory) cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 0;
        c.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
