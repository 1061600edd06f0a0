//! Extreme eigenpairs of symmetric pencils on small patch systems.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cholesky::EnvelopeCholesky;
use super::sparse::{axpy, dot, CsrMatrix};
use super::LinalgError;

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions {
    /// relative change of the eigenvalue between sweeps
    pub tol: f64,
    pub max_iter: usize,
    /// spectral shift; `None` picks `1e-8 · max(K_ii / M_ii)`
    pub shift: Option<f64>,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500, shift: None, seed: 0x5eed }
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// `‖K v − λ M v‖₂ / (λ ‖M v‖₂)` at exit
    pub residual: f64,
}

fn default_shift(k: &CsrMatrix, m: &CsrMatrix) -> f64 {
    let kd = k.diagonal();
    let md = m.diagonal();
    let r = kd.iter().zip(&md).map(|(a, b)| a / b).fold(0.0, f64::max);
    1e-8 * r.max(f64::MIN_POSITIVE)
}

fn shifted(k: &CsrMatrix, m: &CsrMatrix, sigma: f64) -> CsrMatrix {
    let mut t = Vec::with_capacity(k.nnz() + m.nnz());
    for (a, s) in [(k, 1.0), (m, sigma)] {
        for i in 0..a.nrows() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.push((i, j, s * v));
            }
        }
    }
    CsrMatrix::from_triplets(k.nrows(), k.ncols(), t)
}

/// M-orthonormal basis of the span of `vs`; numerically dependent vectors are
/// dropped.
fn m_orthonormalize(m: &CsrMatrix, vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vs {
        let mut x = v.clone();
        let norm0 = dot(&x, &m.mul_vec(&x)).sqrt();
        for _ in 0..2 {
            for q in &out {
                let c = dot(q, &m.mul_vec(&x));
                axpy(-c, q, &mut x);
            }
        }
        let nrm = dot(&x, &m.mul_vec(&x)).sqrt();
        if nrm > 1e-10 * norm0 && nrm > 0.0 {
            x.iter_mut().for_each(|xi| *xi /= nrm);
            out.push(x);
        }
    }
    out
}

fn deflate(m: &CsrMatrix, q: &[Vec<f64>], x: &mut [f64]) {
    if q.is_empty() {
        return;
    }
    let mx = m.mul_vec(x);
    for qi in q {
        let c = dot(qi, &mx);
        axpy(-c, qi, x);
    }
}

/// Smallest eigenvalue of `K v = λ M v` on the M-orthogonal complement of
/// `deflation`.
///
/// `K` symmetric positive semidefinite with kernel inside the span of
/// `deflation`, `M` SPD. Block inverse iteration with a Rayleigh-Ritz step.
pub fn smallest_nonzero_eig(
    k: &CsrMatrix,
    m: &CsrMatrix,
    deflation: &[Vec<f64>],
    opts: &EigenOptions,
) -> Result<EigenPair, LinalgError> {
    let n = k.nrows();
    if m.nrows() != n {
        return Err(LinalgError::DimensionMismatch { expected: n, found: m.nrows() });
    }
    let q = m_orthonormalize(m, deflation);
    if n <= q.len() {
        return Err(LinalgError::DimensionMismatch { expected: q.len() + 1, found: n });
    }
    let sigma = opts.shift.unwrap_or_else(|| default_shift(k, m));
    let chol = EnvelopeCholesky::factor(&shifted(k, m, sigma))?;
    let block = (n - q.len()).min(4);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut basis: Vec<Vec<f64>> = (0..block)
        .map(|_| {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            deflate(m, &q, &mut v);
            v
        })
        .collect();

    let mut last = f64::INFINITY;
    let mut history = Vec::new();
    for it in 1..=opts.max_iter {
        let mut next: Vec<Vec<f64>> = basis
            .iter()
            .map(|v| {
                let mut x = chol.solve(&m.mul_vec(v));
                deflate(m, &q, &mut x);
                x
            })
            .collect();
        next = m_orthonormalize(m, &next);
        if next.is_empty() {
            return Err(LinalgError::NoConvergence { iterations: it, residual: f64::NAN, history });
        }
        let p = next.len();
        let kv: Vec<Vec<f64>> = next.iter().map(|v| k.mul_vec(v)).collect();
        let proj = DMatrix::from_fn(p, p, |i, j| 0.5 * (dot(&next[i], &kv[j]) + dot(&next[j], &kv[i])));
        let eig = SymmetricEigen::new(proj);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        basis = order
            .iter()
            .map(|&c| {
                let mut v = vec![0.0; n];
                for (r, x) in next.iter().enumerate() {
                    axpy(eig.eigenvectors[(r, c)], x, &mut v);
                }
                v
            })
            .collect();
        let lambda = eig.eigenvalues[order[0]];
        let change = (lambda - last).abs() / lambda.abs().max(f64::MIN_POSITIVE);
        history.push(change);
        last = lambda;
        let v = &basis[0];
        let mut r = k.mul_vec(v);
        let mv = m.mul_vec(v);
        axpy(-lambda, &mv, &mut r);
        let residual = (dot(&r, &r)).sqrt() / (lambda.abs() * dot(&mv, &mv).sqrt()).max(f64::MIN_POSITIVE);
        if change <= opts.tol && residual <= opts.tol.sqrt() {
            return Ok(EigenPair { value: lambda, vector: v.clone(), iterations: it, residual });
        }
    }
    let tail = history[history.len().saturating_sub(10)..].to_vec();
    Err(LinalgError::NoConvergence { iterations: opts.max_iter, residual: *history.last().unwrap(), history: tail })
}

/// Largest eigenvalue of `N v = λ D v` by power iteration on
/// `(D + σM)⁻¹ N`, with `N` given as a matrix-free product.
///
/// Both `N` and `D` must vanish on `deflation`. Returns the Rayleigh quotient
/// `vᵀNv / vᵀ(D+σM)v`, a lower bound of the supremum that converges to it.
pub fn largest_generalized_eig<F>(
    apply_n: F,
    d: &CsrMatrix,
    m: &CsrMatrix,
    deflation: &[Vec<f64>],
    opts: &EigenOptions,
) -> Result<EigenPair, LinalgError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = d.nrows();
    let q = m_orthonormalize(m, deflation);
    let sigma = opts.shift.unwrap_or_else(|| default_shift(d, m));
    let ds = shifted(d, m, sigma);
    let chol = EnvelopeCholesky::factor(&ds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    deflate(m, &q, &mut v);

    let mut last = f64::NAN;
    let mut history = Vec::new();
    for it in 1..=opts.max_iter {
        let nv = apply_n(&v);
        let dv = ds.mul_vec(&v);
        let denom = dot(&v, &dv);
        let lambda = dot(&v, &nv) / denom;
        let change = (lambda - last).abs() / lambda.abs().max(f64::MIN_POSITIVE);
        history.push(lambda);
        if change <= opts.tol || lambda == 0.0 {
            let mut r = nv.clone();
            axpy(-lambda, &dv, &mut r);
            let residual = dot(&r, &r).sqrt() / (lambda.abs() * dot(&dv, &dv).sqrt()).max(f64::MIN_POSITIVE);
            return Ok(EigenPair { value: lambda, vector: v, iterations: it, residual });
        }
        last = lambda;
        let mut x = chol.solve(&nv);
        deflate(m, &q, &mut x);
        let nrm = dot(&x, &ds.mul_vec(&x)).sqrt();
        if !(nrm > 0.0) {
            return Ok(EigenPair { value: 0.0, vector: v, iterations: it, residual: 0.0 });
        }
        x.iter_mut().for_each(|xi| *xi /= nrm);
        v = x;
    }
    let value = *history.last().unwrap();
    let tail = history[history.len().saturating_sub(10)..].to_vec();
    Err(LinalgError::NoConvergence { iterations: opts.max_iter, residual: value, history: tail })
}
