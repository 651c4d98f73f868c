//! UE receiver: matched filtering, energy detection and assembly of the
//! linear measurement system.
//!
//! Vectorization is column-major over the N×M angle-domain matrix: entry
//! (n, m) of Γ sits at `m·N + n` in vec(Γ), which is also nalgebra's
//! storage order and matches g = ǔ ⊗ v̌*.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{beamspace_response, ChannelRealization, SystemConfig};
use crate::error::{Error, Result};
use crate::signaling::{delay_chips, doppler_factor, BeamCodebook, PnSet, PowerConfig, SignalConfig, SlotProbe};

/// Linear system q = B·vec(Γ) + noise_floor·1 + w.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBatch {
    /// Slot-major, then BS chain, then UE chain.
    pub q: DVector<f64>,
    /// Binary (M_RF·N_RF·T) × (M·N) probing matrix.
    pub b: DMatrix<f64>,
    pub noise_floor: f64,
    pub ue_antennas: usize,
    pub bs_antennas: usize,
}

impl MeasurementBatch {
    pub fn rows(&self) -> usize {
        self.q.len()
    }
}

#[inline]
pub fn vec_index(n: usize, m: usize, ue_antennas: usize) -> usize {
    m * ue_antennas + n
}

/// Row index of measurement (s, i, j).
#[inline]
pub fn row_index(slot: usize, bs_chain: usize, ue_chain: usize, bs_rf: usize, ue_rf: usize) -> usize {
    (slot * bs_rf + bs_chain) * ue_rf + ue_chain
}

/// y[k] = Σ_n rx[n + k]·c[n] for k in 0..taps.
pub fn matched_filter(rx: &[Complex64], pn: &[f64], taps: usize) -> Result<Vec<Complex64>> {
    if pn.is_empty() || taps == 0 || rx.len() < taps + pn.len() - 1 {
        return Err(Error::DimensionMismatch {
            context: "matched_filter",
            expected: format!("at least {} samples", taps + pn.len().max(1) - 1),
            actual: format!("{} samples", rx.len()),
        });
    }
    let mut out = vec![Complex64::default(); taps];
    matched_filter_into(rx, pn, &mut out);
    Ok(out)
}

pub(crate) fn matched_filter_into(rx: &[Complex64], pn: &[f64], out: &mut [Complex64]) {
    for (k, y) in out.iter_mut().enumerate() {
        let window = &rx[k..k + pn.len()];
        let (mut re, mut im) = (0.0, 0.0);
        for (z, &c) in window.iter().zip(pn) {
            re += z.re * c;
            im += z.im * c;
        }
        *y = Complex64::new(re, im);
    }
}

/// Σ_k |y[k]|² over all taps.
pub fn accumulate_energy(mf: &[Complex64]) -> f64 {
    mf.iter().map(Complex64::norm_sqr).sum()
}

/// Arithmetic mean over the sub-slots of one beacon slot.
pub fn average_slot(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::config("cannot average an empty beacon slot"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Known noise contribution Ň_c·N_0·R(0) with R(0) = N_c.
pub fn noise_floor(signal: &SignalConfig, noise_psd: f64) -> f64 {
    signal.correlation_taps as f64 * noise_psd * signal.chips_per_sequence as f64
}

/// Everything the UE keeps from one beacon slot.
#[derive(Debug, Clone)]
pub struct SlotMeasurement {
    /// Slot-averaged energy q_{s,i,j} at index `i·N_RF + j`.
    pub energy: Vec<f64>,
    /// Slot-averaged complex matched-filter output per (i, j) and tap.
    pub coherent: Vec<Vec<Complex64>>,
}

/// Run S sub-slots through the matched filters and energy detectors.
pub fn measure_slot<R: Rng + ?Sized>(
    probe: &SlotProbe,
    pn: &PnSet,
    sequences: usize,
    rng: &mut R,
) -> Result<SlotMeasurement> {
    if sequences == 0 {
        return Err(Error::config("at least one sequence per slot"));
    }
    let (m_rf, n_rf) = (probe.bs_rf_chains, probe.ue_rf_chains);
    let taps = probe.signal_mf(0, 0).len();
    let mut noise = vec![vec![Complex64::default(); probe.window]; n_rf];
    let mut mf = vec![Complex64::default(); taps];
    let mut energies = vec![Vec::with_capacity(sequences); m_rf * n_rf];
    let mut coherent = vec![vec![Complex64::default(); taps]; m_rf * n_rf];

    for _ in 0..sequences {
        for buf in noise.iter_mut() {
            probe.draw_noise(buf, rng);
        }
        for i in 0..m_rf {
            for j in 0..n_rf {
                matched_filter_into(&noise[j], pn.sequence(i), &mut mf);
                for (y, s) in mf.iter_mut().zip(probe.signal_mf(i, j)) {
                    *y += s;
                }
                energies[i * n_rf + j].push(accumulate_energy(&mf));
                for (c, y) in coherent[i * n_rf + j].iter_mut().zip(&mf) {
                    *c += y;
                }
            }
        }
    }

    let scale = 1.0 / sequences as f64;
    for taps in coherent.iter_mut() {
        for c in taps.iter_mut() {
            *c *= scale;
        }
    }
    let energy = energies.iter().map(|e| average_slot(e)).collect::<Result<_>>()?;
    Ok(SlotMeasurement { energy, coherent })
}

/// Binary probing matrix with row (s, i, j) = indicator of 𝒰_{s,i} × 𝒱_{s,j}.
pub fn measurement_matrix(codebook: &BeamCodebook) -> DMatrix<f64> {
    let (m_rf, n_rf) = (codebook.bs_rf_chains, codebook.ue_rf_chains);
    let n = codebook.ue_antennas;
    let rows = codebook.slots * m_rf * n_rf;
    let mut b = DMatrix::zeros(rows, codebook.bs_antennas * n);
    for s in 0..codebook.slots {
        for i in 0..m_rf {
            for j in 0..n_rf {
                let r = row_index(s, i, j, m_rf, n_rf);
                for &m in codebook.bs_support(s, i) {
                    for &nn in codebook.ue_support(s, j) {
                        b[(r, vec_index(nn, m, n))] = 1.0;
                    }
                }
            }
        }
    }
    b
}

/// Stack slot averages (already in (s, i, j) order) into a batch.
pub fn assemble_measurements(
    slot_averages: &[f64],
    codebook: &BeamCodebook,
    noise_floor: f64,
) -> Result<MeasurementBatch> {
    let b = measurement_matrix(codebook);
    if slot_averages.len() != b.nrows() {
        return Err(Error::DimensionMismatch {
            context: "assemble_measurements",
            expected: format!("{} slot averages", b.nrows()),
            actual: format!("{}", slot_averages.len()),
        });
    }
    if !(noise_floor > 0.0) {
        return Err(Error::config("noise floor must be positive"));
    }
    Ok(MeasurementBatch {
        q: DVector::from_column_slice(slot_averages),
        b,
        noise_floor,
        ue_antennas: codebook.ue_antennas,
        bs_antennas: codebook.bs_antennas,
    })
}

/// Angle-domain second-order statistics Γ (N×M) seen by the energy
/// detector, with E|ρ_l|² = γ_l and the Doppler-rotated zero-lag
/// correlation of each path.
pub fn ground_truth_gamma(
    realization: &ChannelRealization,
    system: &SystemConfig,
    signal: &SignalConfig,
    power: &PowerConfig,
    kappa_u: usize,
    kappa_v: usize,
) -> DMatrix<f64> {
    let (n, m) = (system.ue_antennas, system.bs_antennas);
    let chip_s = signal.chip_duration_s();
    let scale = power.p_dim(chip_s, system) / (kappa_u * kappa_v) as f64;
    let mut gamma = DMatrix::zeros(n, m);
    for (l, p) in realization.paths.iter().enumerate() {
        let nu = realization.doppler_hz(l);
        let r0: Complex64 = (0..signal.chips_per_sequence)
            .map(|k| doppler_factor(nu, k, chip_s))
            .sum();
        let ar = beamspace_response(p.aoa, n);
        let at = beamspace_response(p.aod, m);
        let w = scale * p.gamma * r0.norm_sqr();
        for mm in 0..m {
            for nn in 0..n {
                gamma[(nn, mm)] += w * ar[nn].norm_sqr() * at[mm].norm_sqr();
            }
        }
    }
    gamma
}

/// Tap energy profile of one realization, used to pick the OMP tap.
pub fn strongest_tap(coherent_profile: &[f64]) -> usize {
    coherent_profile
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, &e)| if e > best.1 { (k, e) } else { best })
        .0
}

/// Chip delays of every path (re-exported for diagnostics).
pub fn path_taps(realization: &ChannelRealization, signal: &SignalConfig) -> Vec<usize> {
    delay_chips(realization, signal.chip_duration_s())
}

/// Dump (q, B) as two Matrix Market sections: B in coordinate form, then q
/// as a dense array. The noise floor goes in a comment line.
pub fn write_matrix_market<W: Write>(batch: &MeasurementBatch, mut w: W) -> Result<()> {
    let nnz = batch.b.iter().filter(|&&x| x != 0.0).count();
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "% measurement matrix B, vec(Gamma) column-major over {}x{}", batch.ue_antennas, batch.bs_antennas)?;
    writeln!(w, "% noise_floor {:e}", batch.noise_floor)?;
    writeln!(w, "{} {} {}", batch.b.nrows(), batch.b.ncols(), nnz)?;
    for c in 0..batch.b.ncols() {
        for r in 0..batch.b.nrows() {
            let x = batch.b[(r, c)];
            if x != 0.0 {
                writeln!(w, "{} {} {}", r + 1, c + 1, x)?;
            }
        }
    }
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "% measurement vector q")?;
    writeln!(w, "{} 1", batch.q.len())?;
    for x in batch.q.iter() {
        writeln!(w, "{x:e}")?;
    }
    Ok(())
}
