//! Recovery of the angle-domain power spread and beam-pair selection.

mod nnls;
mod omp;

use nalgebra::DMatrix;

pub use nnls::{kkt_certificate, m_plus_check, nnls, nnls_solve, KktReport, MPlusReport, NnlsOptions, NnlsSolution};
pub use omp::{omp_baseline, OmpOutcome};

use crate::error::{Error, Result};
use crate::frontend::MeasurementBatch;

/// Non-negative N×M estimate Γ* of the angle-domain power.
#[derive(Debug, Clone)]
pub struct PsfEstimate {
    pub gamma_star: DMatrix<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// A beam pair: UE grid index n* and BS grid index m*.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSelection {
    pub ue_index: usize,
    pub bs_index: usize,
    pub strength: f64,
}

impl BeamSelection {
    pub fn cell(&self) -> (usize, usize) {
        (self.ue_index, self.bs_index)
    }
}

/// Solve the NNLS recovery for one measurement batch.
pub fn estimate_psf(batch: &MeasurementBatch, opts: &NnlsOptions) -> Result<PsfEstimate> {
    let sol = nnls_solve(&batch.b, &batch.q, batch.noise_floor, opts)?;
    Ok(PsfEstimate {
        gamma_star: DMatrix::from_column_slice(batch.ue_antennas, batch.bs_antennas, sol.x.as_slice()),
        residual_norm: sol.residual_norm,
        iterations: sol.iterations,
        converged: sol.converged,
    })
}

/// Argmax of Γ*, ties going to the smallest (n, m) in lexicographic order.
pub fn select_beam(gamma_star: &DMatrix<f64>) -> Result<BeamSelection> {
    let mut best: Option<BeamSelection> = None;
    for n in 0..gamma_star.nrows() {
        for m in 0..gamma_star.ncols() {
            let v = gamma_star[(n, m)];
            if v > best.map_or(0.0, |b| b.strength) {
                best = Some(BeamSelection {
                    ue_index: n,
                    bs_index: m,
                    strength: v,
                });
            }
        }
    }
    best.ok_or(Error::NoDetection("estimated power spread is identically zero"))
}
