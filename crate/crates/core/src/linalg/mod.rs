//! Sparse linear algebra: storage, SPD solvers, constrained (saddle point)
//! solves and a shifted inverse iteration for generalized eigenproblems.

mod cholesky;
mod eigen;
mod saddle;
mod sparse;

pub use cholesky::{rcm_ordering, DenseCholesky, EnvelopeCholesky};
pub use eigen::{largest_generalized_eig, smallest_nonzero_eig, EigenOptions, EigenPair};
pub use saddle::{filter_constraint_rows, solve_saddle, ConstrainedSolver, SaddleSolution, SaddleSystem};
pub use sparse::{axpy, dot, norm2, norm_inf, CsrMatrix, TripletBuilder};

use thiserror::Error;

/// Systems up to this many unknowns are factored directly.
pub const DIRECT_SOLVE_LIMIT: usize = 200_000;

/// Default relative residual for SPD solves.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("constraint block is rank deficient; dependent rows {dependent_rows:?}")]
    RankDeficient { dependent_rows: Vec<usize> },
    #[error("no convergence after {iterations} iterations (residual {residual:e}); history tail {history:?}")]
    NoConvergence { iterations: usize, residual: f64, history: Vec<f64> },
}

/// Solves `K x = f` for symmetric positive definite `K`.
///
/// Direct envelope Cholesky (plus up to three refinement sweeps) below
/// [`DIRECT_SOLVE_LIMIT`] unknowns, Jacobi-preconditioned CG above.
pub fn solve_spd(k: &CsrMatrix, f: &[f64], tol: f64) -> Result<Vec<f64>, LinalgError> {
    if f.len() != k.nrows() {
        return Err(LinalgError::DimensionMismatch { expected: k.nrows(), found: f.len() });
    }
    if k.nrows() > DIRECT_SOLVE_LIMIT {
        return pcg(k, f, tol, 20 * k.nrows()).map(|(x, _)| x);
    }
    let chol = EnvelopeCholesky::factor(k)?;
    solve_refined(k, &chol, f, tol)
}

/// Direct solve with an existing factor, refined until the normwise backward
/// error `‖f − Kx‖∞ / (‖K‖∞ ‖x‖∞ + ‖f‖∞)` meets `tol`.
pub fn solve_refined(k: &CsrMatrix, chol: &EnvelopeCholesky, f: &[f64], tol: f64) -> Result<Vec<f64>, LinalgError> {
    let fnorm = norm_inf(f);
    let mut x = chol.solve(f);
    if fnorm == 0.0 {
        return Ok(x);
    }
    let knorm = k.row_abs_sums().into_iter().fold(0.0, f64::max);
    let mut history = Vec::new();
    for _ in 0..4 {
        let mut r = f.to_vec();
        let kx = k.mul_vec(&x);
        axpy(-1.0, &kx, &mut r);
        let rel = norm_inf(&r) / (knorm * norm_inf(&x) + fnorm);
        history.push(rel);
        if rel <= tol {
            return Ok(x);
        }
        let dx = chol.solve(&r);
        axpy(1.0, &dx, &mut x);
    }
    let residual = *history.last().unwrap();
    Err(LinalgError::NoConvergence { iterations: history.len(), residual, history })
}

/// Jacobi-preconditioned conjugate gradients. Returns the solution and the
/// relative residual history.
pub fn pcg(k: &CsrMatrix, f: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, Vec<f64>), LinalgError> {
    let n = f.len();
    let diag = k.diagonal();
    let fnorm = norm2(f);
    let mut x = vec![0.0; n];
    if fnorm == 0.0 {
        return Ok((x, vec![0.0]));
    }
    let mut r = f.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = Vec::new();
    let mut q = vec![0.0; n];
    for _ in 0..max_iter {
        k.mul_vec_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(LinalgError::NotPositiveDefinite { row: 0, pivot: pq });
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        let rel = norm2(&r) / fnorm;
        history.push(rel);
        if rel <= tol {
            return Ok((x, history));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let residual = history.last().copied().unwrap_or(1.0);
    let tail = history[history.len().saturating_sub(10)..].to_vec();
    Err(LinalgError::NoConvergence { iterations: max_iter, residual, history: tail })
}
