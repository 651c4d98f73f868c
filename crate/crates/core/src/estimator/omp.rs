//! Orthogonal matching pursuit on instantaneous matched-filter coefficients.
//!
//! This is the static-channel comparison scheme: the complex peak-tap
//! outputs of every (slot, BS chain, UE chain) are modeled as
//! y = A·vec(Ȟ) + z with a single Ȟ for the whole training window, and A's
//! rows are the combined angle-domain beamformers g_{s,i,j}ᵀ.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use super::BeamSelection;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct OmpOutcome {
    pub selection: BeamSelection,
    /// Selected dictionary columns in pick order.
    pub support: Vec<usize>,
    pub coefficients: Vec<Complex64>,
    /// True if a ridge-regularized solve replaced a singular normal system.
    pub regularized: bool,
}

/// Complex least squares over the columns in `support`; real dictionary.
fn restricted_ls(dict: &DMatrix<f64>, y: &[Complex64], support: &[usize]) -> (Vec<Complex64>, bool) {
    let k = support.len();
    let gram = DMatrix::from_fn(k, k, |r, c| dict.column(support[r]).dot(&dict.column(support[c])));
    let rhs_re = DVector::from_fn(k, |r, _| dict.column(support[r]).iter().zip(y).map(|(a, z)| a * z.re).sum());
    let rhs_im = DVector::from_fn(k, |r, _| dict.column(support[r]).iter().zip(y).map(|(a, z)| a * z.im).sum());
    let (chol, regularized) = match Cholesky::new(gram.clone()) {
        Some(c) if c.l().diagonal().iter().all(|&d| d > 1e-6 * gram.diagonal().amax().sqrt()) => (c, false),
        _ => {
            let ridge = 1e-8 * gram.trace().max(f64::MIN_POSITIVE) / k as f64;
            let reg = gram + DMatrix::identity(k, k) * ridge;
            (Cholesky::new(reg).expect("ridge-regularized Gram matrix is positive definite"), true)
        }
    };
    let re = chol.solve(&rhs_re);
    let im = chol.solve(&rhs_im);
    (re.iter().zip(im.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect(), regularized)
}

/// Run `sparsity` OMP iterations and report the cell of the largest
/// recovered coefficient. Cells are vec indices over an N×M grid with
/// N = `ue_antennas`.
pub fn omp_baseline(
    y: &[Complex64],
    dict: &DMatrix<f64>,
    sparsity: usize,
    ue_antennas: usize,
) -> Result<OmpOutcome> {
    if dict.nrows() != y.len() || dict.ncols() == 0 || ue_antennas == 0 || !dict.ncols().is_multiple_of(ue_antennas) {
        return Err(Error::DimensionMismatch {
            context: "omp_baseline",
            expected: format!("{} dictionary rows and a multiple of {ue_antennas} columns", y.len()),
            actual: format!("{}x{}", dict.nrows(), dict.ncols()),
        });
    }
    if sparsity == 0 {
        return Err(Error::config("OMP sparsity must be at least 1"));
    }
    let energy: f64 = y.iter().map(Complex64::norm_sqr).sum();
    if energy == 0.0 {
        return Err(Error::NoDetection("all measurements are zero"));
    }

    let norms: Vec<f64> = dict.column_iter().map(|c| c.norm()).collect();
    let mut residual = y.to_vec();
    let mut support = Vec::new();
    let mut coefficients = Vec::new();
    let mut regularized = false;

    for _ in 0..sparsity.min(dict.ncols()) {
        let mut best = (usize::MAX, 0.0);
        for (c, col) in dict.column_iter().enumerate() {
            if norms[c] == 0.0 || support.contains(&c) {
                continue;
            }
            let corr: Complex64 = col.iter().zip(&residual).map(|(a, r)| r * *a).sum();
            let score = corr.norm() / norms[c];
            if score > best.1 {
                best = (c, score);
            }
        }
        if best.0 == usize::MAX {
            break;
        }
        support.push(best.0);
        let (coef, reg) = restricted_ls(dict, y, &support);
        regularized |= reg;
        residual.copy_from_slice(y);
        for (&c, &x) in support.iter().zip(&coef) {
            for (r, a) in residual.iter_mut().zip(dict.column(c).iter()) {
                *r -= x * *a;
            }
        }
        coefficients = coef;
        if residual.iter().map(Complex64::norm_sqr).sum::<f64>() <= 1e-24 * energy {
            break;
        }
    }

    let (pos, strength) = coefficients
        .iter()
        .enumerate()
        .fold((usize::MAX, 0.0), |best, (k, x)| if x.norm() > best.1 { (k, x.norm()) } else { best });
    if pos == usize::MAX {
        return Err(Error::NoDetection("OMP recovered no non-zero coefficient"));
    }
    let cell = support[pos];
    Ok(OmpOutcome {
        selection: BeamSelection {
            ue_index: cell % ue_antennas,
            bs_index: cell / ue_antennas,
            strength: strength * strength,
        },
        support,
        coefficients,
        regularized,
    })
}
