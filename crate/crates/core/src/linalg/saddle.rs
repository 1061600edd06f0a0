//! Equality-constrained SPD solves
//!
//! ```text
//! [ K  Cᵀ ] [u]   [f]
//! [ C  0  ] [μ] = [g]
//! ```
//!
//! `K` is factored once; the constraint block enters through the small dense
//! Schur complement `S = C K⁻¹ Cᵀ = WᵀW` with `W = L⁻¹ P Cᵀ`. A factored
//! [`ConstrainedSolver`] serves any number of right-hand sides.

use super::cholesky::{DenseCholesky, EnvelopeCholesky};
use super::sparse::{axpy, norm2, norm_inf, CsrMatrix};
use super::LinalgError;

/// Relative threshold below which a constraint row is treated as zero.
pub const CONSTRAINT_ROW_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub k: CsrMatrix,
    pub c: CsrMatrix,
    pub rhs_primal: Vec<f64>,
    pub rhs_dual: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SaddleSolution {
    pub primal: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// `‖K u + Cᵀμ − f‖₂`
    pub primal_residual: f64,
    /// `‖C u − g‖₂`
    pub dual_residual: f64,
}

/// Drops rows whose 2-norm is below `CONSTRAINT_ROW_TOL` times the largest
/// row norm, then exact duplicates. Returns the kept row indices.
pub fn filter_constraint_rows(rows: &[Vec<(usize, f64)>]) -> Vec<usize> {
    let norms: Vec<f64> = rows.iter().map(|r| r.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()).collect();
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let mut kept: Vec<usize> = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if !(norms[i] > CONSTRAINT_ROW_TOL * max) {
            continue;
        }
        if kept.iter().any(|&j| rows[j] == *row) {
            continue;
        }
        kept.push(i);
    }
    kept
}

/// Factored saddle-point operator.
#[derive(Debug, Clone)]
pub struct ConstrainedSolver {
    k: CsrMatrix,
    c: CsrMatrix,
    chol: EnvelopeCholesky,
    /// columns of `W D⁻¹` in the factor's permuted numbering, with their
    /// first nonzero offset
    w: Vec<(usize, Vec<f64>)>,
    /// `D = diag(S)^{1/2}`; the Schur complement is factored with unit diagonal
    scale: Vec<f64>,
    schur: Option<DenseCholesky>,
}

/// Relative pivot threshold of the equilibrated Schur complement.
const SCHUR_PIVOT_TOL: f64 = 1e-12;

impl ConstrainedSolver {
    pub fn new(k: CsrMatrix, c: CsrMatrix) -> Result<Self, LinalgError> {
        let (solver, s) = Self::factor_k(k, c)?;
        Self::finish(solver, s, false).map(|(s, _)| s)
    }

    /// Like [`ConstrainedSolver::new`], but numerically dependent constraint
    /// rows are dropped instead of reported. Returns the kept row indices of
    /// `c`, ascending.
    pub fn new_pruned(k: CsrMatrix, c: CsrMatrix) -> Result<(Self, Vec<usize>), LinalgError> {
        let (solver, s) = Self::factor_k(k, c)?;
        Self::finish(solver, s, true)
    }

    /// Factors `K`, forms the scaled columns of `W` and returns the
    /// equilibrated Schur complement (row-major).
    fn factor_k(k: CsrMatrix, c: CsrMatrix) -> Result<(Self, Vec<f64>), LinalgError> {
        if c.ncols() != k.nrows() {
            return Err(LinalgError::DimensionMismatch { expected: k.nrows(), found: c.ncols() });
        }
        let chol = EnvelopeCholesky::factor(&k)?;
        let m = c.nrows();
        let mut w = Vec::with_capacity(m);
        let mut scale = Vec::with_capacity(m);
        for j in 0..m {
            let (cols, vals) = c.row(j);
            let entries: Vec<(usize, f64)> = cols.iter().copied().zip(vals.iter().copied()).collect();
            let mut col = chol.forward_solve_sparse(&entries);
            let start = col.iter().position(|&v| v != 0.0).unwrap_or(col.len());
            let d = norm2(&col[start..]);
            if !(d > 0.0) {
                return Err(LinalgError::RankDeficient { dependent_rows: vec![j] });
            }
            col[start..].iter_mut().for_each(|v| *v /= d);
            w.push((start, col[start..].to_vec()));
            scale.push(d);
        }
        let mut s = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                let v = shifted_dot(&w[i], &w[j]);
                s[i * m + j] = v;
                s[j * m + i] = v;
            }
        }
        Ok((Self { k, c, chol, w, scale, schur: None }, s))
    }

    fn finish(mut self, s: Vec<f64>, prune: bool) -> Result<(Self, Vec<usize>), LinalgError> {
        let m = self.c.nrows();
        if m == 0 {
            return Ok((self, Vec::new()));
        }
        let dependent = match DenseCholesky::factor(&s, m, SCHUR_PIVOT_TOL) {
            Ok(f) => {
                self.schur = Some(f);
                return Ok((self, (0..m).collect()));
            }
            Err(LinalgError::RankDeficient { dependent_rows }) if prune => dependent_rows,
            Err(e) => return Err(e),
        };
        let kept: Vec<usize> = (0..m).filter(|r| !dependent.contains(r)).collect();
        let ks: Vec<f64> = kept
            .iter()
            .flat_map(|&i| kept.iter().map(|&j| (i, j)).collect::<Vec<_>>())
            .map(|(i, j)| s[i * m + j])
            .collect();
        self.schur =
            if kept.is_empty() { None } else { Some(DenseCholesky::factor(&ks, kept.len(), SCHUR_PIVOT_TOL)?) };
        let rows: Vec<Vec<(usize, f64)>> = kept
            .iter()
            .map(|&r| {
                let (cols, vals) = self.c.row(r);
                cols.iter().copied().zip(vals.iter().copied()).collect()
            })
            .collect();
        self.c = CsrMatrix::from_rows(self.c.ncols(), &rows);
        let mut w = std::mem::take(&mut self.w);
        self.w = kept.iter().map(|&r| std::mem::take(&mut w[r])).collect();
        self.scale = kept.iter().map(|&r| self.scale[r]).collect();
        Ok((self, kept))
    }

    pub fn num_primal(&self) -> usize {
        self.k.nrows()
    }

    pub fn num_constraints(&self) -> usize {
        self.c.nrows()
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.k
    }

    pub fn constraints(&self) -> &CsrMatrix {
        &self.c
    }

    fn solve_once(&self, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut y = self.chol.forward_solve(f);
        let mu = match &self.schur {
            None => Vec::new(),
            Some(s) => {
                // C K⁻¹ f = Wᵀ y
                let rhs: Vec<f64> = self
                    .w
                    .iter()
                    .zip(g.iter().zip(&self.scale))
                    .map(|((start, col), (gi, d))| {
                        col.iter().zip(&y[*start..]).map(|(a, b)| a * b).sum::<f64>() - gi / d
                    })
                    .collect();
                let mu = s.solve(&rhs);
                for ((start, col), &m) in self.w.iter().zip(&mu) {
                    if m != 0.0 {
                        axpy(-m, col, &mut y[*start..]);
                    }
                }
                mu.iter().zip(&self.scale).map(|(m, d)| m / d).collect()
            }
        };
        (self.chol.backward_from_half(y), mu)
    }

    fn residuals(&self, f: &[f64], g: &[f64], u: &[f64], mu: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut r1 = f.to_vec();
        axpy(-1.0, &self.k.mul_vec(u), &mut r1);
        if !mu.is_empty() {
            axpy(-1.0, &self.c.mul_vec_transpose(mu), &mut r1);
        }
        let mut r2 = g.to_vec();
        axpy(-1.0, &self.c.mul_vec(u), &mut r2);
        (r1, r2)
    }

    /// Solves with up to two refinement sweeps. Both residuals end at most
    /// `tol * (1 + ‖rhs‖)` or an error is returned.
    pub fn solve(&self, f: &[f64], g: &[f64], tol: f64) -> Result<SaddleSolution, LinalgError> {
        if f.len() != self.num_primal() {
            return Err(LinalgError::DimensionMismatch { expected: self.num_primal(), found: f.len() });
        }
        if g.len() != self.num_constraints() {
            return Err(LinalgError::DimensionMismatch { expected: self.num_constraints(), found: g.len() });
        }
        let (mut u, mut mu) = self.solve_once(f, g);
        let scale_f = 1.0 + norm2(f);
        let scale_g = 1.0 + norm2(g);
        let mut history = Vec::new();
        for sweep in 0..3 {
            let (r1, r2) = self.residuals(f, g, &u, &mu);
            let (n1, n2) = (norm2(&r1), norm2(&r2));
            history.push(n1.max(n2));
            if n1 <= tol * scale_f && n2 <= tol * scale_g {
                return Ok(SaddleSolution { primal: u, multipliers: mu, primal_residual: n1, dual_residual: n2 });
            }
            if sweep == 2 {
                break;
            }
            let (du, dmu) = self.solve_once(&r1, &r2);
            axpy(1.0, &du, &mut u);
            axpy(1.0, &dmu, &mut mu);
        }
        Err(LinalgError::NoConvergence { iterations: history.len(), residual: *history.last().unwrap(), history })
    }

    /// Max-norm of `C u`, the constraint violation of a primal vector.
    pub fn constraint_violation(&self, u: &[f64]) -> f64 {
        norm_inf(&self.c.mul_vec(u))
    }
}

fn shifted_dot(a: &(usize, Vec<f64>), b: &(usize, Vec<f64>)) -> f64 {
    let (sa, va) = (a.0, &a.1);
    let (sb, vb) = (b.0, &b.1);
    let s = sa.max(sb);
    va[s - sa..].iter().zip(&vb[s - sb..]).map(|(x, y)| x * y).sum()
}

pub fn solve_saddle(sys: &SaddleSystem, tol: f64) -> Result<SaddleSolution, LinalgError> {
    if sys.rhs_dual.len() != sys.c.nrows() {
        return Err(LinalgError::DimensionMismatch { expected: sys.c.nrows(), found: sys.rhs_dual.len() });
    }
    let solver = ConstrainedSolver::new(sys.k.clone(), sys.c.clone())?;
    solver.solve(&sys.rhs_primal, &sys.rhs_dual, tol)
}
