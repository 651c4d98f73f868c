//! Lawson–Hanson active-set solver for min ‖A·x − y‖² subject to x ≥ 0.
//!
//! The passive-set least-squares subproblems are solved through a Cholesky
//! factor of the passive Gram matrix. Adding a column extends the factor in
//! O(|P|²); dropping columns refactors. One step of iterative refinement
//! against the true residual follows every solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnlsOptions {
    /// Relative KKT tolerance, scaled by ‖Aᵀy‖∞.
    pub tol: f64,
    /// Outer iterations; `None` means 3·(number of unknowns).
    pub max_iter: Option<usize>,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        NnlsOptions {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// ‖A·x − y‖ at the start and after every accepted outer iteration.
    pub residual_history: Vec<f64>,
}

/// Solve min ‖B·x + noise_floor·1 − q‖² over x ≥ 0 by shifting the target.
pub fn nnls_solve(
    b: &DMatrix<f64>,
    q: &DVector<f64>,
    noise_floor: f64,
    opts: &NnlsOptions,
) -> Result<NnlsSolution> {
    let target = q.map(|v| v - noise_floor);
    nnls(b, &target, opts)
}

/// Lower-triangular factor of the Gram matrix of the passive columns.
struct GramFactor {
    idx: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl GramFactor {
    fn new() -> Self {
        GramFactor {
            idx: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Append column `j`; false if it is numerically dependent on the set.
    fn push(&mut self, j: usize, a: &DMatrix<f64>) -> bool {
        let col = a.column(j);
        let gjj = col.norm_squared();
        if gjj == 0.0 {
            return false;
        }
        let mut w: Vec<f64> = self.idx.iter().map(|&p| a.column(p).dot(&col)).collect();
        for k in 0..w.len() {
            let row = &self.rows[k];
            let s: f64 = row[..k].iter().zip(&w[..k]).map(|(l, v)| l * v).sum();
            w[k] = (w[k] - s) / row[k];
        }
        let d2 = gjj - w.iter().map(|v| v * v).sum::<f64>();
        if d2 <= 1e-12 * gjj {
            return false;
        }
        w.push(d2.sqrt());
        self.rows.push(w);
        self.idx.push(j);
        true
    }

    /// Solve (LLᵀ)·z = rhs.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut z = rhs.to_vec();
        for k in 0..n {
            let row = &self.rows[k];
            let s: f64 = row[..k].iter().zip(&z[..k]).map(|(l, v)| l * v).sum();
            z[k] = (z[k] - s) / row[k];
        }
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|r| self.rows[r][k] * z[r]).sum();
            z[k] = (z[k] - s) / self.rows[k][k];
        }
        z
    }

    fn rebuild(&mut self, keep: &[usize], a: &DMatrix<f64>) -> Vec<usize> {
        self.idx.clear();
        self.rows.clear();
        keep.iter().copied().filter(|&j| !self.push(j, a)).collect()
    }
}

/// Least squares restricted to the passive set, with one refinement step.
fn passive_solve(factor: &GramFactor, a: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    let rhs: Vec<f64> = factor.idx.iter().map(|&p| a.column(p).dot(y)).collect();
    let mut z = factor.solve(&rhs);
    let mut r = y.clone();
    for (&p, &zp) in factor.idx.iter().zip(&z) {
        r.axpy(-zp, &a.column(p), 1.0);
    }
    let corr: Vec<f64> = factor.idx.iter().map(|&p| a.column(p).dot(&r)).collect();
    for (zk, dk) in z.iter_mut().zip(factor.solve(&corr)) {
        *zk += dk;
    }
    z
}

fn residual(a: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut r = y.clone();
    for (j, &xj) in x.iter().enumerate() {
        if xj != 0.0 {
            r.axpy(-xj, &a.column(j), 1.0);
        }
    }
    r
}

/// Non-negative least squares min ‖A·x − y‖², x ≥ 0.
///
/// Never panics on iteration exhaustion: the current (feasible, best so
/// far) iterate is returned with `converged = false`.
pub fn nnls(a: &DMatrix<f64>, y: &DVector<f64>, opts: &NnlsOptions) -> Result<NnlsSolution> {
    let (rows, n) = a.shape();
    if rows != y.len() || n == 0 || rows == 0 {
        return Err(Error::DimensionMismatch {
            context: "nnls",
            expected: format!("non-empty A with {} rows", y.len()),
            actual: format!("{rows}x{n}"),
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::config("NNLS tolerance must be positive"));
    }
    let max_iter = opts.max_iter.unwrap_or(3 * n);
    let aty = a.tr_mul(y);
    let threshold = opts.tol * aty.amax().max(f64::MIN_POSITIVE);

    let mut x = DVector::zeros(n);
    let mut in_passive = vec![false; n];
    let mut blocked = vec![false; n];
    let mut factor = GramFactor::new();
    let mut w = aty.clone();
    let mut history = vec![y.norm()];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let mut pick = None;
        let mut best = threshold;
        for j in 0..n {
            if !in_passive[j] && !blocked[j] && w[j] > best {
                best = w[j];
                pick = Some(j);
            }
        }
        let Some(j) = pick else {
            converged = true;
            break;
        };
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        if !factor.push(j, a) {
            blocked[j] = true;
            continue;
        }
        in_passive[j] = true;

        while !factor.idx.is_empty() {
            let z = passive_solve(&factor, a, y);
            if z.iter().all(|&v| v > 0.0) {
                for (&p, &zp) in factor.idx.iter().zip(&z) {
                    x[p] = zp;
                }
                break;
            }
            // Step toward z until the first passive entry hits zero.
            let mut alpha = f64::INFINITY;
            let mut hit = 0;
            for (k, (&p, &zp)) in factor.idx.iter().zip(&z).enumerate() {
                if zp <= 0.0 {
                    let denom = x[p] - zp;
                    let t = if denom > 0.0 { x[p] / denom } else { 0.0 };
                    if t < alpha {
                        alpha = t;
                        hit = k;
                    }
                }
            }
            for (&p, &zp) in factor.idx.iter().zip(&z) {
                x[p] += alpha * (zp - x[p]);
            }
            x[factor.idx[hit]] = 0.0;
            let keep: Vec<usize> = factor.idx.iter().copied().filter(|&p| x[p] > 0.0).collect();
            for &p in &factor.idx {
                if x[p] <= 0.0 {
                    x[p] = 0.0;
                    in_passive[p] = false;
                }
            }
            for p in factor.rebuild(&keep, a) {
                x[p] = 0.0;
                in_passive[p] = false;
            }
        }

        if in_passive[j] {
            blocked.iter_mut().for_each(|b| *b = false);
        } else {
            // Re-entering j would reproduce the same zero step.
            blocked[j] = true;
        }

        let r = residual(a, &x, y);
        history.push(r.norm());
        w = a.tr_mul(&r);
    }

    let residual_norm = residual(a, &x, y).norm();
    Ok(NnlsSolution {
        x,
        residual_norm,
        iterations,
        converged,
        residual_history: history,
    })
}

/// Outcome of an independent optimality check of a candidate solution.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// max |∇_j|/scale over entries x_j > 0.
    pub active_violation: f64,
    /// max (−∇_j)/scale over entries x_j = 0.
    pub inactive_violation: f64,
    pub negative_entries: usize,
    pub passed: bool,
}

/// Check the KKT conditions of min ‖A·x − y‖², x ≥ 0, with gradient
/// ∇ = Aᵀ(A·x − y) and scale ‖Aᵀy‖∞.
pub fn kkt_certificate(a: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>, tol: f64) -> KktReport {
    let scale = a.tr_mul(y).amax().max(f64::MIN_POSITIVE);
    let grad = a.tr_mul(&(a * x - y));
    let mut active = 0.0f64;
    let mut inactive = 0.0f64;
    let mut negative = 0;
    for (xj, gj) in x.iter().zip(grad.iter()) {
        if *xj < 0.0 {
            negative += 1;
        } else if *xj > 0.0 {
            active = active.max(gj.abs() / scale);
        } else {
            inactive = inactive.max(-gj / scale);
        }
    }
    KktReport {
        active_violation: active,
        inactive_violation: inactive,
        negative_entries: negative,
        passed: negative == 0 && active <= tol && inactive <= tol,
    }
}

/// Coverage form of the M⁺ condition: with d = 1, Bᵀd > 0 iff every column
/// is probed at least once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MPlusReport {
    pub satisfied: bool,
    /// Columns never probed.
    pub unprobed: Vec<usize>,
}

pub fn m_plus_check(b: &DMatrix<f64>) -> MPlusReport {
    let unprobed: Vec<usize> = (0..b.ncols()).filter(|&c| b.column(c).sum() <= 0.0).collect();
    MPlusReport {
        satisfied: unprobed.is_empty(),
        unprobed,
    }
}
