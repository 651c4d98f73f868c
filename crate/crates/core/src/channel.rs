//! Multipath channel synthesis and the DFT beamspace.
//!
//! A channel is a short list of scatterers, each with an angle of arrival at
//! the UE, an angle of departure at the base station (BS), a delay and a
//! relative speed. Gains follow a Rice model and are redrawn per coherence
//! block; the initial Doppler phase of each path is redrawn per beacon slot.
//!
//! Angles are radians everywhere in this crate. Arrays are half-wavelength
//! uniform linear arrays.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT_MPS: f64 = 2.997_924_58e8;

/// Antenna and RF-chain counts for both link ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// BS antennas (M).
    pub bs_antennas: usize,
    /// UE antennas (N).
    pub ue_antennas: usize,
    /// BS RF chains (M_RF).
    pub bs_rf_chains: usize,
    /// UE RF chains (N_RF).
    pub ue_rf_chains: usize,
    pub carrier_hz: f64,
    /// Maximum available bandwidth B.
    pub bandwidth_hz: f64,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bs_antennas == 0
            || self.ue_antennas == 0
            || self.bs_rf_chains == 0
            || self.ue_rf_chains == 0
        {
            return Err(Error::config("antenna and RF-chain counts must be at least 1"));
        }
        if self.bs_rf_chains > self.bs_antennas {
            return Err(Error::config("BS RF chains exceed BS antennas"));
        }
        if self.ue_rf_chains > self.ue_antennas {
            return Err(Error::config("UE RF chains exceed UE antennas"));
        }
        if !(self.carrier_hz > 0.0) || !(self.bandwidth_hz > 0.0) {
            return Err(Error::config("carrier and bandwidth must be positive"));
        }
        Ok(())
    }

    /// Number of angle-domain unknowns, M·N.
    pub fn grid_size(&self) -> usize {
        self.bs_antennas * self.ue_antennas
    }
}

/// Ground-truth parameters of a single propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    /// Linear path strength γ.
    pub gamma: f64,
    /// Rice factor η; `f64::INFINITY` is a deterministic (pure LOS) gain.
    pub eta: f64,
    /// Angle of arrival at the UE.
    pub aoa: f64,
    /// Angle of departure at the BS.
    pub aod: f64,
    pub delay_s: f64,
    pub rel_speed_mps: f64,
}

impl PathParams {
    pub fn doppler_hz(&self, carrier_hz: f64) -> f64 {
        self.rel_speed_mps * carrier_hz / SPEED_OF_LIGHT_MPS
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::config("path strength gamma must be positive"));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::config("Rice factor eta must be non-negative"));
        }
        if !(self.aoa.abs() <= PI / 2.0) || !(self.aod.abs() <= PI / 2.0) {
            return Err(Error::config("angles must lie in [-pi/2, pi/2]"));
        }
        if !(self.delay_s >= 0.0) {
            return Err(Error::config("path delay must be non-negative"));
        }
        Ok(())
    }
}

/// A scatterer cluster: `subpath_count` subpaths around `center`, sharing its
/// delay and speed and splitting its strength equally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub center: PathParams,
    pub angular_spread: f64,
    pub subpath_count: usize,
}

impl ClusterParams {
    pub fn single(path: PathParams) -> Self {
        ClusterParams {
            center: path,
            angular_spread: 0.0,
            subpath_count: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.center.validate()?;
        if !(self.angular_spread >= 0.0) {
            return Err(Error::config("angular spread must be non-negative"));
        }
        if self.subpath_count == 0 {
            return Err(Error::config("a cluster needs at least one subpath"));
        }
        Ok(())
    }

    /// Draw the subpaths; angles jitter uniformly over the spread.
    pub fn expand<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<PathParams> {
        if self.subpath_count == 1 && self.angular_spread == 0.0 {
            return vec![self.center];
        }
        let gamma = self.center.gamma / self.subpath_count as f64;
        let half = self.angular_spread / 2.0;
        (0..self.subpath_count)
            .map(|_| {
                let mut jitter = |c: f64| {
                    let a = c + rng.random_range(-half..=half);
                    a.clamp(-PI / 2.0, PI / 2.0)
                };
                PathParams {
                    gamma,
                    aoa: jitter(self.center.aoa),
                    aod: jitter(self.center.aod),
                    ..self.center
                }
            })
            .collect()
    }
}

/// How fast the fading gains change during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceModel {
    /// New fading draw and new initial Doppler phase every beacon slot.
    Fast,
    /// Gains constant over the whole training window; Doppler phase evolves
    /// continuously from slot to slot.
    Slow,
}

/// Initial Doppler phase model across beacon slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotPhase {
    /// i.i.d. uniform on [0, 1) cycles per slot.
    Iid,
    /// One uniform draw, then advanced by ν·slot_duration every slot.
    Continuous { slot_duration_s: f64 },
}

/// One draw of the time-varying channel over `slot_count` beacon slots.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Expanded path list (clusters flattened into subpaths).
    pub paths: Vec<PathParams>,
    /// Index of the originating cluster for each entry of `paths`.
    pub cluster_of: Vec<usize>,
    pub slot_count: usize,
    /// Complex gains ρ, row-major `[slot][path]`.
    gains: Vec<Complex64>,
    /// Initial Doppler phase ν̌ in cycles, row-major `[slot][path]`.
    phases: Vec<f64>,
    carrier_hz: f64,
}

impl ChannelRealization {
    pub fn gain(&self, slot: usize, path: usize) -> Complex64 {
        self.gains[slot * self.paths.len() + path]
    }

    pub fn phase0(&self, slot: usize, path: usize) -> f64 {
        self.phases[slot * self.paths.len() + path]
    }

    pub fn doppler_hz(&self, path: usize) -> f64 {
        self.paths[path].doppler_hz(self.carrier_hz)
    }

    pub fn carrier_hz(&self) -> f64 {
        self.carrier_hz
    }

    /// Antenna-domain channel of one path at one slot, ρ·e^{j2πν̌}·a_R·a_Tᴴ.
    pub fn path_matrix(&self, slot: usize, path: usize, system: &SystemConfig) -> DMatrix<Complex64> {
        let p = &self.paths[path];
        let c = self.gain(slot, path) * cis(self.phase0(slot, path));
        let ar = array_response(p.aoa, system.ue_antennas);
        let at = array_response(p.aod, system.bs_antennas);
        (ar * at.adjoint()) * c
    }
}

#[inline]
pub(crate) fn cis(cycles: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * cycles)
}

/// ULA response, entry m = exp(j·m·π·sin(angle)) for m = 0..count.
pub fn array_response(angle: f64, count: usize) -> DVector<Complex64> {
    let s = angle.sin();
    DVector::from_iterator(
        count,
        (0..count).map(|m| Complex64::from_polar(1.0, PI * m as f64 * s)),
    )
}

/// Unitary DFT dictionary with columns √(1/count)·a(grid angle).
pub fn dft_matrix(count: usize) -> DMatrix<Complex64> {
    let norm = 1.0 / (count as f64).sqrt();
    DMatrix::from_fn(count, count, |m, k| {
        let cycles = m as f64 * (k as f64 / count as f64 - 0.5);
        Complex64::from_polar(norm, 2.0 * PI * cycles)
    })
}

/// Grid angles with (1 + sin θ)/2 = k/count, ascending from −π/2.
pub fn angle_grid(count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| (2.0 * k as f64 / count as f64 - 1.0).clamp(-1.0, 1.0).asin())
        .collect()
}

/// Grid index nearest to `angle` in the sine domain. The grid is periodic in
/// sin θ with period 2, so +π/2 maps onto index 0.
pub fn nearest_grid_index(angle: f64, count: usize) -> usize {
    let pos = (1.0 + angle.sin()) / 2.0 * count as f64;
    (pos.round() as usize) % count
}

/// F_countᴴ·a(angle): the beamspace image of one steering vector.
pub fn beamspace_response(angle: f64, count: usize) -> Vec<Complex64> {
    let s = angle.sin();
    let norm = 1.0 / (count as f64).sqrt();
    (0..count)
        .map(|k| {
            // Σ_m exp(jπm(sin θ − (2k/count − 1))) / √count
            let delta = PI * (s - (2.0 * k as f64 / count as f64 - 1.0));
            (0..count)
                .map(|m| Complex64::from_polar(norm, delta * m as f64))
                .sum()
        })
        .collect()
}

/// Draw ρ = √γ(√(η/(1+η)) + ρ̌/√(1+η)) with ρ̌ ~ CN(0, 1).
pub fn draw_fading<R: Rng + ?Sized>(gamma: f64, eta: f64, rng: &mut R) -> Complex64 {
    let amp = gamma.sqrt();
    if eta.is_infinite() {
        return Complex64::new(amp, 0.0);
    }
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let scatter = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
    let los = (eta / (1.0 + eta)).sqrt();
    amp * (Complex64::new(los, 0.0) + scatter / (1.0 + eta).sqrt())
}

/// Draw a channel realization over `slot_count` beacon slots.
///
/// Gains are block-constant over `coherence_slots` consecutive slots and
/// independent across blocks. Clusters are expanded once per realization.
pub fn realize_channel<R: Rng + ?Sized>(
    clusters: &[ClusterParams],
    carrier_hz: f64,
    slot_count: usize,
    coherence_slots: usize,
    phase: SlotPhase,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if slot_count == 0 || coherence_slots == 0 {
        return Err(Error::config("slot and coherence counts must be at least 1"));
    }
    let mut paths = Vec::new();
    let mut cluster_of = Vec::new();
    for (c, cluster) in clusters.iter().enumerate() {
        cluster.validate()?;
        for p in cluster.expand(rng) {
            paths.push(p);
            cluster_of.push(c);
        }
    }

    let l = paths.len();
    let mut gains = Vec::with_capacity(slot_count * l);
    for s in 0..slot_count {
        if s % coherence_slots == 0 {
            for p in &paths {
                gains.push(draw_fading(p.gamma, p.eta, rng));
            }
        } else {
            let prev = gains.len() - l;
            gains.extend_from_within(prev..prev + l);
        }
    }

    let phases = match phase {
        SlotPhase::Iid => (0..slot_count * l).map(|_| rng.random::<f64>()).collect(),
        SlotPhase::Continuous { slot_duration_s } => {
            let start: Vec<f64> = (0..l).map(|_| rng.random::<f64>()).collect();
            (0..slot_count)
                .flat_map(|s| {
                    let start = &start;
                    paths.iter().enumerate().map(move |(i, p)| {
                        let adv = p.doppler_hz(carrier_hz) * slot_duration_s * s as f64;
                        (start[i] + adv).rem_euclid(1.0)
                    })
                })
                .collect()
        }
    };

    Ok(ChannelRealization {
        paths,
        cluster_of,
        slot_count,
        gains,
        phases,
        carrier_hz,
    })
}

/// Virtual angle-domain channel F_Nᴴ·H·F_M.
pub fn beamspace_transform(h: &DMatrix<Complex64>, system: &SystemConfig) -> Result<DMatrix<Complex64>> {
    let (n, m) = (system.ue_antennas, system.bs_antennas);
    if h.shape() != (n, m) {
        return Err(Error::DimensionMismatch {
            context: "beamspace_transform",
            expected: format!("{n}x{m}"),
            actual: format!("{}x{}", h.nrows(), h.ncols()),
        });
    }
    Ok(dft_matrix(n).adjoint() * h * dft_matrix(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn system(m: usize, n: usize) -> SystemConfig {
        SystemConfig {
            bs_antennas: m,
            ue_antennas: n,
            bs_rf_chains: 1,
            ue_rf_chains: 1,
            carrier_hz: 70e9,
            bandwidth_hz: 1.76e9,
        }
    }

    #[test]
    fn array_response_broadside_and_endfire() {
        let a = array_response(0.0, 4);
        assert!(a.iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let a = array_response(PI / 2.0, 2);
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((a[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
        assert!(array_response(0.3, 16).iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn grid_steering_vectors_are_scaled_dft_columns() {
        for &count in &[1usize, 4, 7, 32] {
            let f = dft_matrix(count);
            for (k, &angle) in angle_grid(count).iter().enumerate() {
                let a = array_response(angle, count);
                let col = f.column(k) * Complex64::new((count as f64).sqrt(), 0.0);
                assert!((a - col).camax() < 1e-9, "count {count} column {k}");
            }
        }
    }

    #[test]
    fn dft_is_unitary() {
        assert_eq!(dft_matrix(1)[(0, 0)], Complex64::new(1.0, 0.0));
        for count in 1..=64 {
            let f = dft_matrix(count);
            let g = f.adjoint() * &f;
            let dev = (g - DMatrix::<Complex64>::identity(count, count)).camax();
            assert!(dev < 1e-12, "count {count}: {dev}");
        }
    }

    #[test]
    fn angle_grid_values() {
        let g = angle_grid(2);
        assert!((g[0] + PI / 2.0).abs() < 1e-15 && g[1].abs() < 1e-15);
        let sines: Vec<f64> = angle_grid(4).iter().map(|a| a.sin()).collect();
        for (s, e) in sines.iter().zip([-1.0, -0.5, 0.0, 0.5]) {
            assert!((s - e).abs() < 1e-12);
        }
        let g = angle_grid(32);
        assert_eq!(g.len(), 32);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn nearest_grid_round_trip() {
        for (k, &a) in angle_grid(32).iter().enumerate() {
            assert_eq!(nearest_grid_index(a, 32), k);
        }
        assert_eq!(nearest_grid_index(PI / 2.0, 32), 0);
    }

    #[test]
    fn beamspace_response_matches_matrix_product() {
        let f = dft_matrix(16);
        for &angle in &[0.1, -0.7, 1.2] {
            let direct = f.adjoint() * array_response(angle, 16);
            let fast = beamspace_response(angle, 16);
            for k in 0..16 {
                assert!((direct[k] - fast[k]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn pure_los_fading_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = draw_fading(1.0, 1e12, &mut rng);
        assert!((rho - Complex64::new(1.0, 0.0)).norm() < 1e-5);
        assert_eq!(draw_fading(2.0, f64::INFINITY, &mut rng), Complex64::new(2f64.sqrt(), 0.0));
        assert!(draw_fading(1e-300, 3.0, &mut rng).norm() < 1e-140);
    }

    #[test]
    fn fading_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(gamma, eta) in &[(0.6, 0.0), (1.0, 100.0), (0.6, 10.0), (2.5, 1.0)] {
            let n = 100_000;
            let draws: Vec<Complex64> = (0..n).map(|_| draw_fading(gamma, eta, &mut rng)).collect();
            let power = draws.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
            assert!((power / gamma - 1.0).abs() < 0.02, "E|rho|^2 {power} for ({gamma},{eta})");
            let mean = draws.iter().sum::<Complex64>() / n as f64;
            let los = gamma * eta / (1.0 + eta);
            // 2 % of gamma absorbs the Monte Carlo error when the LOS part is 0.
            assert!((mean.norm_sqr() - los).abs() < 0.02 * gamma, "|E rho|^2 for ({gamma},{eta})");
        }
    }

    #[test]
    fn single_block_keeps_gains() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let paths = default_paths();
        let r = realize_channel(&paths, 70e9, 20, 20, SlotPhase::Iid, &mut rng).unwrap();
        for s in 1..20 {
            for l in 0..r.paths.len() {
                assert_eq!(r.gain(s, l), r.gain(0, l));
            }
        }
        let r = realize_channel(&paths, 70e9, 20, 5, SlotPhase::Iid, &mut rng).unwrap();
        assert_eq!(r.gain(4, 0), r.gain(0, 0));
        assert_ne!(r.gain(5, 2), r.gain(4, 2));
    }

    #[test]
    fn fast_fading_decorrelates_across_slots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let nlos = [ClusterParams::single(PathParams {
            gamma: 0.6,
            eta: 0.0,
            aoa: 0.0,
            aod: 0.0,
            delay_s: 0.0,
            rel_speed_mps: 0.0,
        })];
        let slots = 10_000;
        let r = realize_channel(&nlos, 70e9, slots, 1, SlotPhase::Iid, &mut rng).unwrap();
        let x: Vec<Complex64> = (0..slots).map(|s| r.gain(s, 0)).collect();
        let lag1: Complex64 = x.windows(2).map(|w| w[1] * w[0].conj()).sum();
        let power: f64 = x.iter().map(|z| z.norm_sqr()).sum();
        assert!(lag1.norm() / power < 0.05);
        let phases: Vec<f64> = (0..slots).map(|s| r.phase0(s, 0)).collect();
        assert!(phases.iter().all(|p| (0.0..1.0).contains(p)));
        let mean = phases.iter().sum::<f64>() / slots as f64;
        assert!((mean - 0.5).abs() < 0.02);
    }

    #[test]
    fn continuous_phase_advances_by_doppler() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = PathParams {
            gamma: 1.0,
            eta: f64::INFINITY,
            aoa: 0.1,
            aod: 0.2,
            delay_s: 0.0,
            rel_speed_mps: 5.0,
        };
        let dur = 1e-4;
        let r = realize_channel(
            &[ClusterParams::single(p)],
            70e9,
            4,
            4,
            SlotPhase::Continuous { slot_duration_s: dur },
            &mut rng,
        )
        .unwrap();
        let nu = p.doppler_hz(70e9);
        assert!((nu - 1167.5).abs() < 0.1);
        let step = (r.phase0(1, 0) - r.phase0(0, 0)).rem_euclid(1.0);
        assert!((step - nu * dur).abs() < 1e-12);
    }

    #[test]
    fn cluster_expansion_splits_power_and_bounds_angles() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = ClusterParams {
            center: PathParams {
                gamma: 0.6,
                eta: 10.0,
                aoa: 0.4,
                aod: -1.5,
                delay_s: 3e-9,
                rel_speed_mps: 2.0,
            },
            angular_spread: 0.2,
            subpath_count: 5,
        };
        let subs = c.expand(&mut rng);
        assert_eq!(subs.len(), 5);
        assert!((subs.iter().map(|p| p.gamma).sum::<f64>() - 0.6).abs() < 1e-15);
        for p in &subs {
            assert!((p.aoa - 0.4).abs() <= 0.1 + 1e-15);
            assert!(p.aod >= -PI / 2.0 && p.aod <= -1.4);
            assert_eq!(p.delay_s, 3e-9);
        }
    }

    #[test]
    fn on_grid_channel_sparsifies() {
        let sys = system(8, 16);
        let (gn, gm) = (angle_grid(16), angle_grid(8));
        let h = array_response(gn[5], 16) * array_response(gm[2], 8).adjoint();
        let hb = beamspace_transform(&h, &sys).unwrap();
        let big = ((8 * 16) as f64).sqrt();
        for n in 0..16 {
            for m in 0..8 {
                let v = hb[(n, m)].norm();
                if (n, m) == (5, 2) {
                    assert!((v - big).abs() < 1e-9);
                } else {
                    assert!(v < 1e-9);
                }
            }
        }
        // Two on-grid paths → support of size two.
        let h2 = &h + array_response(gn[11], 16) * array_response(gm[7], 8).adjoint() * Complex64::new(0.3, 0.2);
        let hb2 = beamspace_transform(&h2, &sys).unwrap();
        let support = hb2.iter().filter(|z| z.norm() > 1e-9 * big).count();
        assert_eq!(support, 2);
    }

    #[test]
    fn beamspace_transform_preserves_energy_and_checks_shape() {
        let sys = system(6, 5);
        let zero = DMatrix::<Complex64>::zeros(5, 6);
        assert_eq!(beamspace_transform(&zero, &sys).unwrap().camax(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = DMatrix::from_fn(5, 6, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let hb = beamspace_transform(&h, &sys).unwrap();
        assert!((hb.norm() - h.norm()).abs() < 1e-12 * h.norm().max(1.0));
        assert!(matches!(
            beamspace_transform(&DMatrix::zeros(6, 5), &sys),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn system_validation() {
        assert!(system(32, 32).validate().is_ok());
        let mut bad = system(4, 4);
        bad.bs_rf_chains = 5;
        assert!(bad.validate().is_err());
        bad = system(4, 4);
        bad.carrier_hz = 0.0;
        assert!(bad.validate().is_err());
    }

    fn default_paths() -> Vec<ClusterParams> {
        [(1.0, 100.0), (0.6, 10.0), (0.6, 0.0)]
            .iter()
            .enumerate()
            .map(|(i, &(gamma, eta))| {
                ClusterParams::single(PathParams {
                    gamma,
                    eta,
                    aoa: 0.1 * i as f64,
                    aod: -0.2 * i as f64,
                    delay_s: i as f64 * 2e-9,
                    rel_speed_mps: 5.0,
                })
            })
            .collect()
    }
}
