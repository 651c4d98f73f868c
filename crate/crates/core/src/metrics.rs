//! SNR bookkeeping, post-alignment rate bounds and power delay profiles.

use rand::Rng;
use serde::Serialize;

use crate::channel::{beamspace_response, draw_fading, cis, PathParams, SystemConfig};
use crate::error::{Error, Result};
use crate::estimator::BeamSelection;
use crate::signaling::{PowerConfig, SignalConfig};

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// (γ + η)/(1 + η), taken as 1 for a deterministic path.
pub fn rice_power_factor(path: &PathParams) -> f64 {
    if path.eta.is_infinite() {
        1.0
    } else {
        (path.gamma + path.eta) / (1.0 + path.eta)
    }
}

pub fn path_power_sum(paths: &[PathParams]) -> f64 {
    paths.iter().map(rice_power_factor).sum()
}

/// SNR before beamforming in dB.
pub fn snr_bbf_db(total_power_w: f64, paths: &[PathParams], noise_psd: f64, bandwidth_hz: f64) -> f64 {
    to_db(total_power_w * path_power_sum(paths) / (noise_psd * bandwidth_hz))
}

/// Transmit power that yields `target_db` before beamforming.
pub fn calibrate_power(target_db: f64, paths: &[PathParams], noise_psd: f64, bandwidth_hz: f64) -> Result<f64> {
    let sum = path_power_sum(paths);
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::config("path power sum must be positive to calibrate transmit power"));
    }
    if !target_db.is_finite() || !(noise_psd > 0.0) || !(bandwidth_hz > 0.0) {
        return Err(Error::config("calibration needs a finite target and positive N0 and B"));
    }
    Ok(from_db(target_db) * noise_psd * bandwidth_hz / sum)
}

/// Averaged-energy SNR with Ň_c ≈ N_c.
pub fn snr_q_db(
    power: &PowerConfig,
    system: &SystemConfig,
    signal: &SignalConfig,
    paths: &[PathParams],
    kappa_u: usize,
    kappa_v: usize,
) -> f64 {
    let mn = (system.bs_antennas * system.ue_antennas) as f64;
    let rf = (system.bs_rf_chains * system.ue_rf_chains) as f64;
    to_db(
        power.total_power_w * signal.chip_duration_s() * path_power_sum(paths) * mn
            / ((kappa_u * kappa_v) as f64 * rf * power.noise_psd_w_per_hz),
    )
}

/// Per-tap SNR at the matched-filter output. Taps with no path are −∞ dB.
pub fn snr_tap_db(
    power: &PowerConfig,
    system: &SystemConfig,
    signal: &SignalConfig,
    paths: &[PathParams],
    kappa_u: usize,
    kappa_v: usize,
) -> Vec<f64> {
    let chip_s = signal.chip_duration_s();
    let mn = (system.bs_antennas * system.ue_antennas) as f64;
    let rf = (system.bs_rf_chains * system.ue_rf_chains) as f64;
    let scale = power.total_power_w * chip_s * signal.chips_per_sequence as f64 * mn
        / ((kappa_u * kappa_v) as f64 * rf * power.noise_psd_w_per_hz);
    let mut taps = vec![0.0; signal.correlation_taps];
    for p in paths {
        let k = (p.delay_s / chip_s).round() as usize;
        if k < taps.len() {
            taps[k] += rice_power_factor(p);
        }
    }
    taps.into_iter().map(|s| to_db(scale * s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrReport {
    pub snr_bbf_db: f64,
    pub snr_q_db: f64,
    pub snr_tap_db: Vec<f64>,
}

impl SnrReport {
    pub fn new(
        power: &PowerConfig,
        system: &SystemConfig,
        signal: &SignalConfig,
        paths: &[PathParams],
        kappa_u: usize,
        kappa_v: usize,
    ) -> Self {
        SnrReport {
            snr_bbf_db: snr_bbf_db(power.total_power_w, paths, power.noise_psd_w_per_hz, system.bandwidth_hz),
            snr_q_db: snr_q_db(power, system, signal, paths, kappa_u, kappa_v),
            snr_tap_db: snr_tap_db(power, system, signal, paths, kappa_u, kappa_v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateBounds {
    /// Matched-filter upper bound, bits/s/Hz.
    pub r_ub: f64,
    /// ISI-as-noise lower bound, bits/s/Hz.
    pub r_lb: f64,
    pub selected_path: usize,
    pub symbol_period_s: f64,
}

fn check_selection(selection: &BeamSelection, system: &SystemConfig) -> Result<()> {
    if selection.ue_index >= system.ue_antennas {
        return Err(Error::IndexOutOfRange {
            context: "UE beam index",
            index: selection.ue_index,
            size: system.ue_antennas,
        });
    }
    if selection.bs_index >= system.bs_antennas {
        return Err(Error::IndexOutOfRange {
            context: "BS beam index",
            index: selection.bs_index,
            size: system.bs_antennas,
        });
    }
    Ok(())
}

/// |vᴴ a_R(φ)|²·|a_T(θ)ᴴ u|² for single-index grid beams.
fn beam_gain(path: &PathParams, system: &SystemConfig, selection: &BeamSelection) -> f64 {
    beamspace_response(path.aoa, system.ue_antennas)[selection.ue_index].norm_sqr()
        * beamspace_response(path.aod, system.bs_antennas)[selection.bs_index].norm_sqr()
}

/// Ergodic rate bounds of the effective SISO link after alignment.
///
/// The selected path l* is the one with the largest mean coupled energy;
/// its phase is assumed compensated. Every other path contributes its
/// full mean energy as interference.
pub fn rate_bounds<R: Rng + ?Sized>(
    paths: &[PathParams],
    system: &SystemConfig,
    selection: &BeamSelection,
    power: &PowerConfig,
    draws: usize,
    rng: &mut R,
) -> Result<RateBounds> {
    check_selection(selection, system)?;
    if paths.is_empty() {
        return Err(Error::config("rate bounds need at least one path"));
    }
    if draws == 0 {
        return Err(Error::config("rate bounds need at least one fading draw"));
    }
    power.validate()?;
    let t_d = 1.0 / system.bandwidth_hz;
    let n0 = power.noise_psd_w_per_hz;
    let gains: Vec<f64> = paths.iter().map(|p| power.total_power_w * t_d * beam_gain(p, system, selection)).collect();
    let star = (0..paths.len())
        .fold(0, |best, l| if gains[l] * paths[l].gamma > gains[best] * paths[best].gamma { l } else { best });

    let mut ub = 0.0;
    let mut sum_c = 0.0;
    let mut sum_c2 = 0.0;
    let mut interference = 0.0;
    let mut samples = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut total = 0.0;
        for (l, p) in paths.iter().enumerate() {
            let rho = draw_fading(p.gamma, p.eta, rng);
            let e = gains[l] * rho.norm_sqr();
            total += e;
            if l == star {
                samples.push(gains[l].sqrt() * rho);
            } else {
                interference += e;
            }
        }
        ub += (1.0 + total / n0).log2();
    }
    let n = draws as f64;
    for c in &samples {
        sum_c += c.re;
        sum_c2 += c.im;
    }
    let mean = num_complex::Complex64::new(sum_c / n, sum_c2 / n);
    let var = samples.iter().map(|c| (c - mean).norm_sqr()).sum::<f64>() / n;
    let r_lb = (1.0 + mean.norm_sqr() / (n0 + var + interference / n)).log2();
    Ok(RateBounds {
        r_ub: ub / n,
        r_lb,
        selected_path: star,
        symbol_period_s: t_d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PdpLabel {
    BeforeBa,
    AfterBa,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdpProfile {
    pub taps: Vec<f64>,
    pub label: PdpLabel,
}

impl PdpProfile {
    pub fn total(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// Index and share of total energy of the strongest tap.
    pub fn dominant(&self) -> (usize, f64) {
        let (k, e) = self
            .taps
            .iter()
            .enumerate()
            .fold((0, 0.0), |b, (k, &e)| if e > b.1 { (k, e) } else { b });
        let total = self.total();
        (k, if total > 0.0 { e / total } else { 0.0 })
    }

    /// Number of taps within `db` of the strongest one.
    pub fn taps_within_db(&self, db: f64) -> usize {
        let peak = self.taps.iter().cloned().fold(0.0, f64::max);
        if peak == 0.0 {
            return 0;
        }
        self.taps.iter().filter(|&&e| e > 0.0 && to_db(peak / e) <= db).count()
    }
}

/// Mean signal energy per delay tap of the matched-filter output.
///
/// Without beams both ends use a single antenna; with a selection both ends
/// use the selected grid beams. Paths on the same tap add with independent
/// uniform phases.
pub fn pdp<R: Rng + ?Sized>(
    paths: &[PathParams],
    system: &SystemConfig,
    beams: Option<&BeamSelection>,
    power: &PowerConfig,
    draws: usize,
    rng: &mut R,
) -> Result<PdpProfile> {
    if let Some(sel) = beams {
        check_selection(sel, system)?;
    }
    if draws == 0 {
        return Err(Error::config("power delay profile needs at least one draw"));
    }
    let t_d = 1.0 / system.bandwidth_hz;
    let tap_of: Vec<usize> = paths.iter().map(|p| (p.delay_s / t_d).round() as usize).collect();
    let len = tap_of.iter().max().map_or(1, |&k| k + 1);
    let amp: Vec<f64> = paths
        .iter()
        .map(|p| {
            let g = beams.map_or(1.0, |sel| beam_gain(p, system, sel));
            (power.total_power_w * t_d * g).sqrt()
        })
        .collect();
    let mut taps = vec![0.0; len];
    let mut acc = vec![num_complex::Complex64::default(); len];
    for _ in 0..draws {
        acc.iter_mut().for_each(|a| *a = Default::default());
        for (l, p) in paths.iter().enumerate() {
            let phase = rng.random::<f64>();
            acc[tap_of[l]] += amp[l] * draw_fading(p.gamma, p.eta, rng) * cis(phase);
        }
        for (t, a) in taps.iter_mut().zip(&acc) {
            *t += a.norm_sqr();
        }
    }
    taps.iter_mut().for_each(|t| *t /= draws as f64);
    Ok(PdpProfile {
        taps,
        label: if beams.is_some() { PdpLabel::AfterBa } else { PdpLabel::BeforeBa },
    })
}
