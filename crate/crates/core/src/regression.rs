//! Least-squares readout: `argmin_w ‖X w − y‖² + λ ‖w̃‖²`, where `w̃` is `w`
//! with the intercept entry zeroed.
//!
//! Rows are streamed in fixed chunks through a tall-skinny QR (`[X | y]` is
//! reduced chunk by chunk to a triangular factor), so the full design never
//! has to be stored and the result does not depend on the thread count. The
//! small triangular problem is then solved through an SVD of `[R; √λ D]`,
//! which returns the minimum-norm solution when `R` is rank deficient.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::HedgePaths;
use crate::error::{Error, Result};

/// Rows per TSQR leaf. Fixed so that floating-point results are reproducible.
pub const TSQR_CHUNK: usize = 2048;
const TSQR_FAN_IN: usize = 8;

/// A design matrix that can produce any block of its rows.
pub trait RowSource: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    /// Fills `out` (`rows.len() × n_cols`) with the rows in `rows`.
    fn fill_rows(&self, rows: Range<usize>, out: &mut DMatrix<f64>) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Intercept first.
    pub weights: Vec<f64>,
    pub train_mse: f64,
    /// Filled in by the caller once held-out rows have been predicted.
    pub test_mse: Option<f64>,
    /// Ratio of the largest to the smallest retained singular value of the
    /// (regularised) least-squares system.
    pub condition_estimate: f64,
    pub ridge_lambda: f64,
    pub effective_rank: usize,
    pub n_train: usize,
}

/// `1e-8 · trace(XᵀX) / P`.
pub fn default_ridge_lambda(frobenius_sq: f64, n_cols: usize) -> f64 {
    1e-8 * frobenius_sq / n_cols.max(1) as f64
}

fn chunk_ranges(n_rows: usize) -> Vec<Range<usize>> {
    (0..n_rows.div_ceil(TSQR_CHUNK))
        .map(|c| c * TSQR_CHUNK..((c + 1) * TSQR_CHUNK).min(n_rows))
        .collect()
}

fn qr_r(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().r()
}

fn stack(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks[0].ncols();
    let rows = blocks.iter().map(DMatrix::nrows).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.rows_mut(at, b.nrows()).copy_from(b);
        at += b.nrows();
    }
    out
}

/// Triangular factor of `[X | y]`, padded to `(P+1) × (P+1)`.
fn tsqr<S: RowSource>(design: &S, targets: &[f64]) -> Result<DMatrix<f64>> {
    let p = design.n_cols();
    let mut level: Vec<DMatrix<f64>> = chunk_ranges(design.n_rows())
        .into_par_iter()
        .map(|rows| {
            let mut block = DMatrix::zeros(rows.len(), p + 1);
            let mut x = DMatrix::zeros(rows.len(), p);
            design.fill_rows(rows.clone(), &mut x)?;
            block.columns_mut(0, p).copy_from(&x);
            block.column_mut(p).copy_from_slice(&targets[rows]);
            Ok(qr_r(block))
        })
        .collect::<Result<_>>()?;
    while level.len() > 1 {
        level = level.par_chunks(TSQR_FAN_IN).map(|group| qr_r(stack(group))).collect();
    }
    let r = level.pop().expect("at least one row");
    let mut full = DMatrix::zeros(p + 1, p + 1);
    full.rows_mut(0, r.nrows()).copy_from(&r);
    Ok(full)
}

/// Fits the readout on every row of `design`. `ridge_lambda = None` selects
/// [`default_ridge_lambda`].
pub fn fit_readout<S: RowSource>(design: &S, targets: &[f64], ridge_lambda: Option<f64>) -> Result<FitResult> {
    let n = design.n_rows();
    let p = design.n_cols();
    if targets.len() != n {
        return Err(Error::contract(format!("{} targets for {n} design rows", targets.len())));
    }
    if n == 0 || p == 0 {
        return Err(Error::contract("cannot fit an empty design"));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("regression targets must be finite"));
    }
    if let Some(l) = ridge_lambda {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::Config(format!("ridge lambda must be finite and >= 0, got {l}")));
        }
    }

    let r_aug = tsqr(design, targets)?;
    let r = r_aug.view((0, 0), (p, p));
    let z = r_aug.view((0, p), (p, 1));
    let rho = r_aug[(p, p)];
    let lambda = ridge_lambda.unwrap_or_else(|| default_ridge_lambda(r.norm_squared(), p));

    let mut a = DMatrix::zeros(2 * p, p);
    a.rows_mut(0, p).copy_from(&r);
    let root = lambda.sqrt();
    for j in 1..p {
        a[(p + j, j)] = root;
    }
    let mut b = DVector::zeros(2 * p);
    b.rows_mut(0, p).copy_from(&z);

    let svd = a
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD of the least-squares system did not converge".into()))?;
    let s_max = svd.singular_values.max();
    let tol = (n.max(p) as f64) * f64::EPSILON * s_max;
    let u = svd.u.as_ref().expect("requested");
    let v_t = svd.v_t.as_ref().expect("requested");
    let ut_b = u.transpose() * &b;
    let mut coeff = DVector::zeros(p);
    let mut rank = 0;
    let mut s_min = f64::INFINITY;
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > tol {
            coeff[i] = ut_b[i] / s;
            rank += 1;
            s_min = s_min.min(*s);
        }
    }
    let w = v_t.transpose() * coeff;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("least-squares solution is not finite".into()));
    }
    let resid = (r * &w - z).norm_squared() + rho * rho;
    Ok(FitResult {
        weights: w.as_slice().to_vec(),
        train_mse: (resid / n as f64).max(0.0),
        test_mse: None,
        condition_estimate: if rank > 0 { s_max / s_min } else { 0.0 },
        ridge_lambda: lambda,
        effective_rank: rank,
        n_train: n,
    })
}

/// `design · weights`, chunk by chunk.
pub fn predict<S: RowSource>(design: &S, weights: &[f64]) -> Result<Vec<f64>> {
    let p = design.n_cols();
    if weights.len() != p {
        return Err(Error::contract(format!("{} weights for {p} columns", weights.len())));
    }
    let w = DVector::from_column_slice(weights);
    let parts: Vec<Vec<f64>> = chunk_ranges(design.n_rows())
        .into_par_iter()
        .map(|rows| {
            let mut x = DMatrix::zeros(rows.len(), p);
            design.fill_rows(rows, &mut x)?;
            Ok((x * &w).as_slice().to_vec())
        })
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

/// Mean squared difference.
pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::contract(format!("{} predictions for {} targets", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::contract("mse of empty vectors"));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

/// Mean over paths of `Σ_k ‖θ̂_{t_k} − θ_{t_k}‖² Δ_k`, where `Δ_k` is the time
/// until the next stored node (the terminal node carries no weight).
pub fn imse(theta_hat: &HedgePaths, theta_ref: &HedgePaths) -> Result<f64> {
    if theta_hat.theta.dim() != theta_ref.theta.dim()
        || theta_hat.time_ids != theta_ref.time_ids
        || theta_hat.path_ids != theta_ref.path_ids
        || theta_hat.grid != theta_ref.grid
    {
        return Err(Error::contract("hedges to compare must share paths, nodes and grid"));
    }
    let n_paths = theta_hat.path_ids.len();
    if n_paths == 0 {
        return Err(Error::contract("imse over zero paths"));
    }
    let grid = theta_hat.grid;
    let dt = grid.dt();
    let ids = &theta_hat.time_ids;
    let weights: Vec<f64> = ids
        .iter()
        .enumerate()
        .map(|(s, &k)| {
            let next = ids.get(s + 1).copied().unwrap_or(grid.steps);
            next.saturating_sub(k) as f64 * dt
        })
        .collect();
    let total: f64 = (0..n_paths)
        .map(|r| {
            let mut acc = 0.0;
            for (s, wt) in weights.iter().enumerate() {
                let mut sq = 0.0;
                for i in 0..theta_hat.dim() {
                    let e = theta_hat.theta[[r, s, i]] - theta_ref.theta[[r, s, i]];
                    sq += e * e;
                }
                acc += sq * wt;
            }
            acc
        })
        .sum();
    Ok(total / n_paths as f64)
}
