//! Downlink probing: PN sequences, pseudo-random beam codebooks and the
//! chip-rate RF-chain outputs at the UE.
//!
//! The chip pulse is an ideal Nyquist pulse, so a path delayed by `d` whole
//! chips shifts the chip sequence by `d` samples and the matched filter is a
//! plain discrete correlation. Each PN sequence in a beacon slot is followed
//! by enough silence to cover the delay spread, so consecutive sequences
//! never overlap and every sub-slot can be simulated on its own buffer.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{beamspace_response, cis, dft_matrix, ChannelRealization, SystemConfig};
use crate::error::{Error, Result};
use crate::frontend::matched_filter_into;

/// Chip-level signaling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    /// Chips per PN sequence (N_c).
    pub chips_per_sequence: usize,
    /// Chip rate B' = 1/T_c.
    pub signal_bandwidth_hz: f64,
    /// PN sequences per beacon slot (S).
    pub sequences_per_slot: usize,
    /// Beacon slots used for training (T).
    pub beacon_slots: usize,
    /// Matched-filter taps accumulated per sequence (Ň_c).
    pub correlation_taps: usize,
}

impl SignalConfig {
    pub fn chip_duration_s(&self) -> f64 {
        1.0 / self.signal_bandwidth_hz
    }

    /// Samples buffered per sequence so that every tap sees N_c chips.
    pub fn rx_window(&self) -> usize {
        self.correlation_taps + self.chips_per_sequence - 1
    }

    /// Smallest admissible Ň_c for a delay spread of `spread_chips`.
    pub fn min_taps(chips_per_sequence: usize, spread_chips: usize) -> usize {
        chips_per_sequence + spread_chips
    }

    /// Sequences that fit in a beacon of the given duration.
    pub fn sequences_for_beacon(beacon_duration_s: f64, signal_bandwidth_hz: f64, chips: usize) -> usize {
        let total = (beacon_duration_s * signal_bandwidth_hz).floor() as usize;
        (total / chips.max(1)).max(1)
    }

    pub fn validate(&self, system: &SystemConfig, spread_chips: usize) -> Result<()> {
        if self.chips_per_sequence == 0 || self.sequences_per_slot == 0 || self.beacon_slots == 0 {
            return Err(Error::config("chips, sequences per slot and beacon slots must be at least 1"));
        }
        if !(self.signal_bandwidth_hz > 0.0) || self.signal_bandwidth_hz > system.bandwidth_hz * (1.0 + 1e-12) {
            return Err(Error::config("signal bandwidth must be positive and at most the system bandwidth"));
        }
        if self.correlation_taps < Self::min_taps(self.chips_per_sequence, spread_chips) {
            return Err(Error::config(format!(
                "correlation taps {} below N_c + delay spread = {}",
                self.correlation_taps,
                Self::min_taps(self.chips_per_sequence, spread_chips)
            )));
        }
        Ok(())
    }
}

/// Transmit power and receiver noise density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub total_power_w: f64,
    pub noise_psd_w_per_hz: f64,
}

impl PowerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.total_power_w >= 0.0) || !(self.noise_psd_w_per_hz > 0.0) {
            return Err(Error::config("transmit power must be >= 0 and noise density > 0"));
        }
        Ok(())
    }

    /// Per-stream, per-chain chip energy P_tot·T_c/(M_RF·N_RF).
    pub fn p_dim(&self, chip_s: f64, system: &SystemConfig) -> f64 {
        self.total_power_w * chip_s / (system.bs_rf_chains * system.ue_rf_chains) as f64
    }
}

/// ±1 probing sequences, one per BS RF chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PnSet {
    chips: Vec<Vec<f64>>,
}

impl PnSet {
    pub fn from_chips(chips: Vec<Vec<f64>>) -> Result<Self> {
        let len = chips.first().map_or(0, Vec::len);
        if len == 0 || chips.iter().any(|c| c.len() != len) {
            return Err(Error::config("PN sequences must be non-empty and of equal length"));
        }
        if chips.iter().flatten().any(|&c| c != 1.0 && c != -1.0) {
            return Err(Error::config("PN chips must be +1 or -1"));
        }
        Ok(PnSet { chips })
    }

    pub fn sequence(&self, i: usize) -> &[f64] {
        &self.chips[i]
    }

    pub fn count(&self) -> usize {
        self.chips.len()
    }

    pub fn len(&self) -> usize {
        self.chips[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Aperiodic correlation Σ_n c_a[n + lag]·c_b[n] for lag ∈ (−N_c, N_c).
    pub fn correlation(&self, a: usize, b: usize, lag: isize) -> f64 {
        let (x, y) = (&self.chips[a], &self.chips[b]);
        let n = x.len() as isize;
        (0..n)
            .filter(|&k| (0..n).contains(&(k + lag)))
            .map(|k| x[(k + lag) as usize] * y[k as usize])
            .sum()
    }
}

/// Draw `count` independent Rademacher sequences of `len` chips.
pub fn gen_pn<R: Rng + ?Sized>(count: usize, len: usize, rng: &mut R) -> Result<PnSet> {
    if count == 0 || len == 0 {
        return Err(Error::config("PN set needs at least one sequence of at least one chip"));
    }
    let chips = (0..count)
        .map(|_| (0..len).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
        .collect();
    Ok(PnSet { chips })
}

/// Angle-domain supports of the BS and UE probing beams for every slot.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamCodebook {
    pub bs_antennas: usize,
    pub ue_antennas: usize,
    pub bs_rf_chains: usize,
    pub ue_rf_chains: usize,
    pub slots: usize,
    pub kappa_u: usize,
    pub kappa_v: usize,
    bs_supports: Vec<Vec<usize>>,
    ue_supports: Vec<Vec<usize>>,
}

impl BeamCodebook {
    /// Build from explicit 0-based supports, `[slot][chain]` flattened.
    pub fn from_supports(
        system: &SystemConfig,
        slots: usize,
        bs_supports: Vec<Vec<usize>>,
        ue_supports: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let (m, n) = (system.bs_antennas, system.ue_antennas);
        if bs_supports.len() != slots * system.bs_rf_chains || ue_supports.len() != slots * system.ue_rf_chains {
            return Err(Error::DimensionMismatch {
                context: "codebook supports",
                expected: format!("{} BS and {} UE supports", slots * system.bs_rf_chains, slots * system.ue_rf_chains),
                actual: format!("{} and {}", bs_supports.len(), ue_supports.len()),
            });
        }
        let kappa_u = bs_supports.first().map_or(0, Vec::len);
        let kappa_v = ue_supports.first().map_or(0, Vec::len);
        for s in &bs_supports {
            check_support(s, m, kappa_u)?;
        }
        for s in &ue_supports {
            check_support(s, n, kappa_v)?;
        }
        Ok(BeamCodebook {
            bs_antennas: m,
            ue_antennas: n,
            bs_rf_chains: system.bs_rf_chains,
            ue_rf_chains: system.ue_rf_chains,
            slots,
            kappa_u,
            kappa_v,
            bs_supports,
            ue_supports,
        })
    }

    pub fn bs_support(&self, slot: usize, chain: usize) -> &[usize] {
        &self.bs_supports[slot * self.bs_rf_chains + chain]
    }

    pub fn ue_support(&self, slot: usize, chain: usize) -> &[usize] {
        &self.ue_supports[slot * self.ue_rf_chains + chain]
    }
}

fn check_support(support: &[usize], count: usize, kappa: usize) -> Result<()> {
    if support.len() != kappa || kappa == 0 {
        return Err(Error::config(format!("support size {} differs from kappa {kappa}", support.len())));
    }
    let mut seen = vec![false; count];
    for &k in support {
        if k >= count {
            return Err(Error::IndexOutOfRange {
                context: "beam support",
                index: k,
                size: count,
            });
        }
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::config(format!("support repeats index {k}")));
        }
    }
    Ok(())
}

/// Draw every support uniformly without replacement. BS and UE sides that
/// share the seed reproduce the same codebook.
pub fn gen_codebook<R: Rng + ?Sized>(
    system: &SystemConfig,
    slots: usize,
    kappa_u: usize,
    kappa_v: usize,
    rng: &mut R,
) -> Result<BeamCodebook> {
    let (m, n) = (system.bs_antennas, system.ue_antennas);
    if kappa_u == 0 || kappa_u > m || kappa_v == 0 || kappa_v > n {
        return Err(Error::config(format!(
            "spreading factors ({kappa_u}, {kappa_v}) outside [1, {m}] x [1, {n}]"
        )));
    }
    if slots == 0 {
        return Err(Error::config("codebook needs at least one slot"));
    }
    let mut draw = |count: usize, kappa: usize| {
        let mut s = index::sample(rng, count, kappa).into_vec();
        s.sort_unstable();
        s
    };
    let mut bs_supports = Vec::with_capacity(slots * system.bs_rf_chains);
    let mut ue_supports = Vec::with_capacity(slots * system.ue_rf_chains);
    for _ in 0..slots {
        for _ in 0..system.bs_rf_chains {
            bs_supports.push(draw(m, kappa_u));
        }
        for _ in 0..system.ue_rf_chains {
            ue_supports.push(draw(n, kappa_v));
        }
    }
    Ok(BeamCodebook {
        bs_antennas: m,
        ue_antennas: n,
        bs_rf_chains: system.bs_rf_chains,
        ue_rf_chains: system.ue_rf_chains,
        slots,
        kappa_u,
        kappa_v,
        bs_supports,
        ue_supports,
    })
}

/// Angle-domain weights 1_support/√κ.
pub fn beamspace_weights(support: &[usize], count: usize, kappa: usize) -> Result<DVector<f64>> {
    check_support(support, count, kappa)?;
    let mut w = DVector::zeros(count);
    let amp = 1.0 / (kappa as f64).sqrt();
    for &k in support {
        w[k] = amp;
    }
    Ok(w)
}

/// Antenna-domain beamformer F_count·(1_support/√κ); unit norm.
pub fn beamforming_vector(support: &[usize], count: usize, kappa: usize) -> Result<DVector<Complex64>> {
    let w = beamspace_weights(support, count, kappa)?.map(|x| Complex64::new(x, 0.0));
    Ok(dft_matrix(count) * w)
}

/// How the M_RF streams are separated at the matched filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamSeparation {
    /// Full waveform simulation: PN auto-correlation sidelobes and
    /// cross-stream leakage are present.
    #[default]
    Simulated,
    /// Orthogonalized streams: the matched filter for stream i sees only
    /// stream i, as an impulse at each path delay scaled by the
    /// Doppler-rotated zero-lag correlation. Noise is still correlated with
    /// the actual chips.
    Ideal,
}

/// Per-trial state shared by every slot: quantized delays and the beamspace
/// images of all steering vectors.
#[derive(Debug)]
pub struct ProbeContext<'a> {
    pub system: &'a SystemConfig,
    pub signal: &'a SignalConfig,
    pub pn: &'a PnSet,
    pub codebook: &'a BeamCodebook,
    pub power: &'a PowerConfig,
    pub realization: &'a ChannelRealization,
    pub separation: StreamSeparation,
    delays: Vec<usize>,
    rx_beamspace: Vec<Vec<Complex64>>,
    tx_beamspace: Vec<Vec<Complex64>>,
}

/// Round path delays to whole chips.
pub fn delay_chips(realization: &ChannelRealization, chip_s: f64) -> Vec<usize> {
    realization
        .paths
        .iter()
        .map(|p| (p.delay_s / chip_s).round() as usize)
        .collect()
}

impl<'a> ProbeContext<'a> {
    pub fn new(
        system: &'a SystemConfig,
        signal: &'a SignalConfig,
        pn: &'a PnSet,
        codebook: &'a BeamCodebook,
        power: &'a PowerConfig,
        realization: &'a ChannelRealization,
        separation: StreamSeparation,
    ) -> Result<Self> {
        power.validate()?;
        if pn.count() != system.bs_rf_chains || pn.len() != signal.chips_per_sequence {
            return Err(Error::DimensionMismatch {
                context: "PN set",
                expected: format!("{} x {}", system.bs_rf_chains, signal.chips_per_sequence),
                actual: format!("{} x {}", pn.count(), pn.len()),
            });
        }
        if codebook.slots < signal.beacon_slots || realization.slot_count < signal.beacon_slots {
            return Err(Error::config("codebook and realization must cover every beacon slot"));
        }
        let delays = delay_chips(realization, signal.chip_duration_s());
        for (path, &d) in delays.iter().enumerate() {
            if d >= signal.correlation_taps {
                return Err(Error::DelayOutsideWindow {
                    path,
                    delay_chips: d,
                    taps: signal.correlation_taps,
                });
            }
        }
        let rx_beamspace = realization
            .paths
            .iter()
            .map(|p| beamspace_response(p.aoa, system.ue_antennas))
            .collect();
        let tx_beamspace = realization
            .paths
            .iter()
            .map(|p| beamspace_response(p.aod, system.bs_antennas))
            .collect();
        Ok(ProbeContext {
            system,
            signal,
            pn,
            codebook,
            power,
            realization,
            separation,
            delays,
            rx_beamspace,
            tx_beamspace,
        })
    }

    pub fn delays(&self) -> &[usize] {
        &self.delays
    }

    /// √P_dim·v_{s,j}ᴴ·H_{s,l}·u_{s,i}, indexed `[(j·M_RF + i)·L + l]`.
    fn couplings(&self, slot: usize) -> Vec<Complex64> {
        let cb = self.codebook;
        let paths = self.realization.paths.len();
        let amp = self.power.p_dim(self.signal.chip_duration_s(), self.system).sqrt()
            / ((cb.kappa_u * cb.kappa_v) as f64).sqrt();
        let mut out = Vec::with_capacity(self.system.ue_rf_chains * self.system.bs_rf_chains * paths);
        for j in 0..self.system.ue_rf_chains {
            let v = cb.ue_support(slot, j);
            for i in 0..self.system.bs_rf_chains {
                let u = cb.bs_support(slot, i);
                for l in 0..paths {
                    let rx: Complex64 = v.iter().map(|&n| self.rx_beamspace[l][n]).sum();
                    let tx: Complex64 = u.iter().map(|&m| self.tx_beamspace[l][m].conj()).sum();
                    let h = self.realization.gain(slot, l) * cis(self.realization.phase0(slot, l));
                    out.push(amp * h * rx * tx);
                }
            }
        }
        out
    }

    /// Precompute everything that is constant within one beacon slot.
    pub fn slot(&self, slot: usize) -> SlotProbe {
        let (m_rf, n_rf) = (self.system.bs_rf_chains, self.system.ue_rf_chains);
        let paths = self.realization.paths.len();
        let n_c = self.signal.chips_per_sequence;
        let taps = self.signal.correlation_taps;
        let window = self.signal.rx_window();
        let chip_s = self.signal.chip_duration_s();
        let coupling = self.couplings(slot);
        let rotation: Vec<Vec<Complex64>> = (0..paths)
            .map(|l| {
                let nu = self.realization.doppler_hz(l);
                (0..n_c).map(|n| doppler_factor(nu, n, chip_s)).collect()
            })
            .collect();

        let mut signal_rx = vec![vec![Complex64::default(); window]; n_rf];
        for (j, rx) in signal_rx.iter_mut().enumerate() {
            for i in 0..m_rf {
                let chips = self.pn.sequence(i);
                for l in 0..paths {
                    let c = coupling[(j * m_rf + i) * paths + l];
                    if c == Complex64::default() {
                        continue;
                    }
                    let d = self.delays[l];
                    for n in 0..n_c {
                        rx[d + n] += c * rotation[l][n] * chips[n];
                    }
                }
            }
        }

        let mut signal_mf = vec![vec![Complex64::default(); taps]; m_rf * n_rf];
        for i in 0..m_rf {
            for j in 0..n_rf {
                let out = &mut signal_mf[i * n_rf + j];
                match self.separation {
                    StreamSeparation::Simulated => {
                        matched_filter_into(&signal_rx[j], self.pn.sequence(i), out);
                    }
                    StreamSeparation::Ideal => {
                        for l in 0..paths {
                            let peak: Complex64 = rotation[l].iter().sum();
                            out[self.delays[l]] += coupling[(j * m_rf + i) * paths + l] * peak;
                        }
                    }
                }
            }
        }

        SlotProbe {
            bs_rf_chains: m_rf,
            ue_rf_chains: n_rf,
            window,
            noise_std: (self.power.noise_psd_w_per_hz / 2.0).sqrt(),
            signal_rx,
            signal_mf,
        }
    }
}

/// exp(j2π·ν·n·T_c); exactly 1 when ν = 0.
#[inline]
pub(crate) fn doppler_factor(nu: f64, n: usize, chip_s: f64) -> Complex64 {
    if nu == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        cis(nu * n as f64 * chip_s)
    }
}

/// Noise-free RF-chain waveforms and their matched-filter outputs for one
/// beacon slot.
#[derive(Debug, Clone)]
pub struct SlotProbe {
    pub bs_rf_chains: usize,
    pub ue_rf_chains: usize,
    pub window: usize,
    noise_std: f64,
    /// Per UE chain, `window` samples.
    signal_rx: Vec<Vec<Complex64>>,
    /// Per (i, j) pair at index `i·N_RF + j`, `taps` samples.
    signal_mf: Vec<Vec<Complex64>>,
}

impl SlotProbe {
    pub fn signal_rx(&self, chain: usize) -> &[Complex64] {
        &self.signal_rx[chain]
    }

    pub fn signal_mf(&self, stream: usize, chain: usize) -> &[Complex64] {
        &self.signal_mf[stream * self.ue_rf_chains + chain]
    }

    /// Fill `buf` with circularly symmetric noise of variance N_0 per sample.
    pub fn draw_noise<R: Rng + ?Sized>(&self, buf: &mut [Complex64], rng: &mut R) {
        for z in buf.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z = Complex64::new(re * self.noise_std, im * self.noise_std);
        }
    }
}

/// Noisy chip-rate outputs of all UE RF chains for one sequence of `slot`,
/// as an N_RF × (Ň_c + N_c − 1) matrix.
#[allow(clippy::too_many_arguments)]
pub fn simulate_rx_samples<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    pn: &PnSet,
    codebook: &BeamCodebook,
    system: &SystemConfig,
    signal: &SignalConfig,
    slot: usize,
    power: &PowerConfig,
    rng: &mut R,
) -> Result<DMatrix<Complex64>> {
    if slot >= signal.beacon_slots {
        return Err(Error::IndexOutOfRange {
            context: "beacon slot",
            index: slot,
            size: signal.beacon_slots,
        });
    }
    let ctx = ProbeContext::new(system, signal, pn, codebook, power, realization, StreamSeparation::Simulated)?;
    let probe = ctx.slot(slot);
    let mut out = DMatrix::zeros(system.ue_rf_chains, probe.window);
    let mut noise = vec![Complex64::default(); probe.window];
    for j in 0..system.ue_rf_chains {
        probe.draw_noise(&mut noise, rng);
        for (k, z) in noise.iter().enumerate() {
            out[(j, k)] = probe.signal_rx(j)[k] + z;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{angle_grid, realize_channel, ClusterParams, PathParams, SlotPhase};
    use crate::frontend::matched_filter;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn system(m: usize, n: usize, m_rf: usize, n_rf: usize) -> SystemConfig {
        SystemConfig {
            bs_antennas: m,
            ue_antennas: n,
            bs_rf_chains: m_rf,
            ue_rf_chains: n_rf,
            carrier_hz: 70e9,
            bandwidth_hz: 1.76e9,
        }
    }

    fn signal(n_c: usize, taps: usize, slots: usize) -> SignalConfig {
        SignalConfig {
            chips_per_sequence: n_c,
            signal_bandwidth_hz: 1.76e9,
            sequences_per_slot: 1,
            beacon_slots: slots,
            correlation_taps: taps,
        }
    }

    #[test]
    fn pn_is_deterministic_and_binary() {
        let a = gen_pn(3, 64, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = gen_pn(3, 64, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        for i in 0..3 {
            assert_eq!(a.correlation(i, i, 0), 64.0);
            assert!(a.sequence(i).iter().all(|&c| c == 1.0 || c == -1.0));
        }
        assert!(gen_pn(0, 4, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn pn_cross_correlation_is_bounded() {
        for seed in 0..100 {
            let pn = gen_pn(3, 64, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        assert!(pn.correlation(a, b, 0).abs() <= 4.0 * 8.0);
                    }
                }
            }
        }
    }

    #[test]
    fn codebook_supports_have_fixed_size() {
        let sys = system(32, 32, 3, 2);
        let cb = gen_codebook(&sys, 30, 8, 6, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for s in 0..30 {
            for i in 0..3 {
                let u = cb.bs_support(s, i);
                assert_eq!(u.len(), 8);
                assert!(u.windows(2).all(|w| w[0] < w[1]));
            }
            for j in 0..2 {
                assert_eq!(cb.ue_support(s, j).len(), 6);
            }
        }
        let again = gen_codebook(&sys, 30, 8, 6, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(cb, again);
    }

    #[test]
    fn full_spreading_covers_everything() {
        let sys = system(10, 6, 2, 1);
        let cb = gen_codebook(&sys, 3, 10, 6, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(cb.bs_support(2, 1), (0..10).collect::<Vec<_>>().as_slice());
        assert_eq!(cb.ue_support(0, 0), (0..6).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn codebook_rejects_bad_kappa() {
        let sys = system(8, 8, 1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gen_codebook(&sys, 1, 0, 2, &mut rng).is_err());
        assert!(gen_codebook(&sys, 1, 9, 2, &mut rng).is_err());
        assert!(gen_codebook(&sys, 1, 2, 9, &mut rng).is_err());
    }

    #[test]
    fn codebook_coverage_at_default_geometry() {
        let sys = system(32, 32, 3, 2);
        for seed in 0..20 {
            let cb = gen_codebook(&sys, 30, 8, 8, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let mut hit = [false; 32];
            for s in 0..30 {
                for i in 0..3 {
                    for &m in cb.bs_support(s, i) {
                        hit[m] = true;
                    }
                }
            }
            assert!(hit.iter().all(|&h| h), "seed {seed}");
        }
    }

    #[test]
    fn figure_example_weights() {
        // {1,3,4,6,8,10} in 1-based numbering.
        let w = beamspace_weights(&[0, 2, 3, 5, 7, 9], 10, 6).unwrap();
        let expect = [1., 0., 1., 1., 0., 1., 0., 1., 0., 1.];
        for (a, e) in w.iter().zip(expect) {
            assert!((a - e / 6f64.sqrt()).abs() < 1e-15);
        }
        let u = beamforming_vector(&[0, 2, 3, 5, 7, 9], 10, 6).unwrap();
        assert!((u.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_index_beam_is_dft_column() {
        let u = beamforming_vector(&[0], 16, 1).unwrap();
        let f = dft_matrix(16);
        assert!((u - f.column(0)).camax() < 1e-15);
        assert!(beamforming_vector(&[16], 16, 1).is_err());
        assert!(beamforming_vector(&[1, 2], 16, 3).is_err());
        assert!(beamforming_vector(&[1, 1], 16, 2).is_err());
    }

    #[test]
    fn p_dim_formula() {
        let p = PowerConfig {
            total_power_w: 6.0,
            noise_psd_w_per_hz: 1.0,
        };
        let sys = system(4, 4, 3, 2);
        assert!((p.p_dim(0.5, &sys) - 0.5).abs() < 1e-15);
    }

    fn los_realization(sys: &SystemConfig, n_idx: usize, m_idx: usize, delays: &[f64], speed: f64) -> ChannelRealization {
        let gn = angle_grid(sys.ue_antennas);
        let gm = angle_grid(sys.bs_antennas);
        let clusters: Vec<ClusterParams> = delays
            .iter()
            .enumerate()
            .map(|(k, &d)| {
                ClusterParams::single(PathParams {
                    gamma: 1.0,
                    eta: f64::INFINITY,
                    aoa: gn[(n_idx + 3 * k) % sys.ue_antennas],
                    aod: gm[(m_idx + 5 * k) % sys.bs_antennas],
                    delay_s: d,
                    rel_speed_mps: speed,
                })
            })
            .collect();
        realize_channel(&clusters, sys.carrier_hz, 1, 1, SlotPhase::Iid, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn aligned_noiseless_samples_have_full_gain() {
        let sys = system(8, 8, 1, 1);
        let sig = signal(16, 20, 1);
        let real = los_realization(&sys, 3, 5, &[0.0], 0.0);
        let pn = gen_pn(1, 16, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let cb = BeamCodebook::from_supports(&sys, 1, vec![vec![5]], vec![vec![3]]).unwrap();
        let power = PowerConfig {
            total_power_w: 1.76e9,
            noise_psd_w_per_hz: 1.0,
        };
        let ctx = ProbeContext::new(&sys, &sig, &pn, &cb, &power, &real, StreamSeparation::Simulated).unwrap();
        let probe = ctx.slot(0);
        let p_dim = power.p_dim(sig.chip_duration_s(), &sys);
        let amp = (p_dim * 64.0).sqrt();
        let phase = real.gain(0, 0) * cis(real.phase0(0, 0));
        for n in 0..16 {
            let expect = amp * phase * pn.sequence(0)[n];
            assert!((probe.signal_rx(0)[n] - expect).norm() < 1e-9 * amp);
        }
        assert!(probe.signal_rx(0)[16..].iter().all(|z| z.norm() < 1e-9 * amp));
    }

    #[test]
    fn zero_power_gives_pure_noise() {
        let sys = system(4, 4, 1, 1);
        let sig = signal(16, 20, 1);
        let real = los_realization(&sys, 0, 0, &[0.0], 0.0);
        let pn = gen_pn(1, 16, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let cb = BeamCodebook::from_supports(&sys, 1, vec![vec![0]], vec![vec![0]]).unwrap();
        let power = PowerConfig {
            total_power_w: 0.0,
            noise_psd_w_per_hz: 2.5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut acc = 0.0;
        let mut count = 0usize;
        while count < 100_000 {
            let y = simulate_rx_samples(&real, &pn, &cb, &sys, &sig, 0, &power, &mut rng).unwrap();
            acc += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += y.len();
        }
        let var = acc / count as f64;
        assert!((var / 2.5 - 1.0).abs() < 0.03, "variance {var}");
    }

    #[test]
    fn two_delays_peak_at_their_taps() {
        let sys = system(8, 8, 1, 1);
        let sig = signal(64, 70, 1);
        let chip = sig.chip_duration_s();
        let real = los_realization(&sys, 1, 2, &[0.0, 5.0 * chip], 0.0);
        let pn = gen_pn(1, 64, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let cb = BeamCodebook::from_supports(&sys, 1, vec![(0..8).collect()], vec![(0..8).collect()]).unwrap();
        let power = PowerConfig {
            total_power_w: 1.0,
            noise_psd_w_per_hz: 1.0,
        };
        let ctx = ProbeContext::new(&sys, &sig, &pn, &cb, &power, &real, StreamSeparation::Simulated).unwrap();
        let probe = ctx.slot(0);
        let y = matched_filter(probe.signal_rx(0), pn.sequence(0), 70).unwrap();
        let mut order: Vec<usize> = (0..70).collect();
        order.sort_by(|&a, &b| y[b].norm().total_cmp(&y[a].norm()));
        let mut top = [order[0], order[1]];
        top.sort();
        assert_eq!(top, [0, 5]);
    }

    #[test]
    fn delay_outside_window_is_rejected() {
        let sys = system(4, 4, 1, 1);
        let sig = signal(16, 18, 1);
        let chip = sig.chip_duration_s();
        let real = los_realization(&sys, 0, 0, &[0.0, 30.0 * chip], 0.0);
        let pn = gen_pn(1, 16, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let cb = BeamCodebook::from_supports(&sys, 1, vec![vec![0]], vec![vec![0]]).unwrap();
        let power = PowerConfig {
            total_power_w: 1.0,
            noise_psd_w_per_hz: 1.0,
        };
        let err = ProbeContext::new(&sys, &sig, &pn, &cb, &power, &real, StreamSeparation::Simulated).unwrap_err();
        assert!(matches!(err, Error::DelayOutsideWindow { path: 1, delay_chips: 30, .. }));
    }

    /// Reference path with no Doppler handling at all.
    fn doppler_free_rx(ctx: &ProbeContext, slot: usize) -> Vec<Complex64> {
        let couplings = ctx.couplings(slot);
        let l_count = ctx.realization.paths.len();
        let mut rx = vec![Complex64::default(); ctx.signal.rx_window()];
        for l in 0..l_count {
            let d = ctx.delays()[l];
            for (n, &c) in ctx.pn.sequence(0).iter().enumerate() {
                rx[d + n] += couplings[l] * c;
            }
        }
        rx
    }

    #[test]
    fn zero_doppler_is_bit_identical() {
        let sys = system(8, 8, 1, 1);
        let sig = signal(32, 40, 1);
        let chip = sig.chip_duration_s();
        let real = los_realization(&sys, 2, 6, &[0.0, 3.0 * chip], 0.0);
        let pn = gen_pn(1, 32, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let cb = BeamCodebook::from_supports(&sys, 1, vec![vec![1, 6, 7]], vec![vec![0, 2, 5]]).unwrap();
        let power = PowerConfig {
            total_power_w: 3.0,
            noise_psd_w_per_hz: 1.0,
        };
        let ctx = ProbeContext::new(&sys, &sig, &pn, &cb, &power, &real, StreamSeparation::Simulated).unwrap();
        assert_eq!(ctx.slot(0).signal_rx(0), doppler_free_rx(&ctx, 0).as_slice());
    }

    #[test]
    fn doppler_phase_advance_per_sequence() {
        let chip = 1.0 / 1.76e9;
        let nu = 5.0 * 70e9 / crate::channel::SPEED_OF_LIGHT_MPS;
        let cycles = nu * 64.0 * chip;
        assert!((cycles - 4.2e-5).abs() < 1e-6);
        let last = doppler_factor(nu, 64, chip);
        assert!((last.arg() - 2.0 * std::f64::consts::PI * cycles).abs() < 1e-12);
    }
}
