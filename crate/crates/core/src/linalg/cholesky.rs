//! Direct factorizations: envelope (profile) Cholesky for sparse SPD matrices
//! under a reverse Cuthill–McKee ordering, and a diagonally pivoted dense
//! Cholesky used for small Schur complements.

use std::collections::VecDeque;

use super::sparse::CsrMatrix;
use super::LinalgError;

/// Reverse Cuthill–McKee ordering of the symmetric sparsity pattern of `a`.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut nbrs: Vec<usize> = Vec::new();

    // pseudo-peripheral start per component
    let bfs_last = |start: usize, visited_base: &[bool]| -> (usize, usize) {
        let mut seen = visited_base.to_vec();
        let mut q = VecDeque::new();
        q.push_back((start, 0usize));
        seen[start] = true;
        let (mut last, mut depth) = (start, 0);
        while let Some((v, d)) = q.pop_front() {
            if d > depth || (d == depth && degree[v] < degree[last]) {
                last = v;
                depth = d;
            }
            for &w in a.row(v).0 {
                if !seen[w] {
                    seen[w] = true;
                    q.push_back((w, d + 1));
                }
            }
        }
        (last, depth)
    };

    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        let mut start = seed;
        let (mut cand, mut ecc) = bfs_last(start, &visited);
        for _ in 0..4 {
            let (next, e) = bfs_last(cand, &visited);
            if e <= ecc {
                break;
            }
            start = cand;
            cand = next;
            ecc = e;
        }
        let _ = start;
        let root = cand;
        visited[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(a.row(v).0.iter().copied().filter(|&w| !visited[w]));
            nbrs.sort_by_key(|&w| (degree[w], w));
            for &w in &nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Cholesky factor `P A Pᵀ = L Lᵀ` stored row-wise over the envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors a symmetric positive definite matrix. Only the lower triangle
    /// (after permutation) is read.
    pub fn factor(a: &CsrMatrix) -> Result<Self, LinalgError> {
        let perm = rcm_ordering(a);
        Self::factor_with_ordering(a, perm)
    }

    pub fn factor_with_ordering(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self, LinalgError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(LinalgError::DimensionMismatch { expected: n, found: a.ncols() });
        }
        let mut inv_perm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for &c in a.row(old).0 {
                let pc = inv_perm[c];
                if pc < first[new] {
                    first[new] = pc;
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0usize);
        for i in 0..n {
            start.push(start[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; start[n]];
        for (new, &old) in perm.iter().enumerate() {
            let (cols, vals) = a.row(old);
            for (&c, &v) in cols.iter().zip(vals) {
                let pc = inv_perm[c];
                if pc <= new {
                    data[start[new] + pc - first[new]] += v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let si = start[i];
            let diag_orig = data[si + i - fi];
            for j in fi..i {
                let fj = first[j];
                let sj = start[j];
                let k0 = fi.max(fj);
                let mut s = data[si + j - fi];
                if k0 < j {
                    let ri = &data[si + k0 - fi..si + j - fi];
                    let rj = &data[sj + k0 - fj..sj + j - fj];
                    s -= dot_unrolled(ri, rj);
                }
                data[si + j - fi] = s / data[sj + j - fj];
            }
            let row = &data[si..si + i - fi];
            let d = data[si + i - fi] - dot_unrolled(row, row);
            if !(d > 1e-14 * diag_orig.abs()) || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite { row: perm[i], pivot: d });
            }
            data[si + i - fi] = d.sqrt();
        }
        Ok(Self { n, perm, inv_perm, first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    #[inline]
    fn diag(&self, i: usize) -> f64 {
        self.data[self.start[i] + i - self.first[i]]
    }

    /// Solves `L y = b` in permuted numbering, starting at the first nonzero.
    fn forward_permuted(&self, y: &mut [f64], from: usize) {
        for i in from..self.n {
            let fi = self.first[i];
            let si = self.start[i];
            let k0 = fi.max(from);
            let mut s = y[i];
            if k0 < i {
                s -= dot_unrolled(&self.data[si + k0 - fi..si + i - fi], &y[k0..i]);
            }
            y[i] = s / self.diag(i);
        }
    }

    fn backward_permuted(&self, y: &mut [f64]) {
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            let xi = y[i] / self.diag(i);
            y[i] = xi;
            if xi != 0.0 {
                let row = &self.data[si..si + i - fi];
                for (yk, &l) in y[fi..i].iter_mut().zip(row) {
                    *yk -= l * xi;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        let from = y.iter().position(|&v| v != 0.0).unwrap_or(self.n);
        self.forward_permuted(&mut y, from);
        self.backward_permuted(&mut y);
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// Returns `L⁻¹ P b` (half solve), in permuted numbering.
    pub fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        let from = y.iter().position(|&v| v != 0.0).unwrap_or(self.n);
        self.forward_permuted(&mut y, from);
        y
    }

    /// Half solve for a sparse right-hand side given as (index, value) pairs.
    pub fn forward_solve_sparse(&self, entries: &[(usize, f64)]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        let mut from = self.n;
        for &(i, v) in entries {
            let p = self.inv_perm[i];
            y[p] += v;
            from = from.min(p);
        }
        self.forward_permuted(&mut y, from);
        y
    }

    /// Solves given the half-solved vector `L⁻¹ P b` (permuted numbering).
    pub fn backward_from_half(&self, mut y: Vec<f64>) -> Vec<f64> {
        self.backward_permuted(&mut y);
        let mut x = vec![0.0; self.n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[inline]
fn dot_unrolled(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let o = 4 * c;
        acc[0] += a[o] * b[o];
        acc[1] += a[o + 1] * b[o + 1];
        acc[2] += a[o + 2] * b[o + 2];
        acc[3] += a[o + 3] * b[o + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for o in 4 * chunks..n {
        s += a[o] * b[o];
    }
    s
}

/// Dense Cholesky with symmetric diagonal pivoting. Detects numerically
/// dependent rows of a Gram-type matrix.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    perm: Vec<usize>,
    // column-major lower factor of the permuted matrix
    l: Vec<f64>,
}

impl DenseCholesky {
    /// `a` is row-major `n × n`. Pivots below `rel_tol * max diag` are
    /// reported as dependent rows (original indices).
    pub fn factor(a: &[f64], n: usize, rel_tol: f64) -> Result<Self, LinalgError> {
        assert_eq!(a.len(), n * n);
        let mut m = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let max_diag = (0..n).map(|i| a[i * n + i]).fold(0.0f64, f64::max);
        for k in 0..n {
            // pick largest remaining diagonal
            let mut p = k;
            for i in k + 1..n {
                if m[i * n + i] > m[p * n + p] {
                    p = i;
                }
            }
            if !(m[p * n + p] > rel_tol * max_diag) {
                let dependent = perm[k..].to_vec();
                return Err(LinalgError::RankDeficient { dependent_rows: dependent });
            }
            if p != k {
                for j in 0..n {
                    m.swap(k * n + j, p * n + j);
                }
                for i in 0..n {
                    m.swap(i * n + k, i * n + p);
                }
                perm.swap(k, p);
            }
            let d = m[k * n + k].sqrt();
            m[k * n + k] = d;
            for i in k + 1..n {
                m[i * n + k] /= d;
            }
            // trailing block kept fully symmetric so later pivot swaps stay valid
            for j in k + 1..n {
                let ljk = m[j * n + k];
                if ljk == 0.0 {
                    continue;
                }
                for i in j..n {
                    let v = m[i * n + j] - m[i * n + k] * ljk;
                    m[i * n + j] = v;
                    m[j * n + i] = v;
                }
            }
        }
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            for i in j..n {
                l[j * n + i] = m[i * n + j];
            }
        }
        Ok(Self { n, perm, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for j in 0..n {
            y[j] /= self.l[j * n + j];
            let yj = y[j];
            for i in j + 1..n {
                y[i] -= self.l[j * n + i] * yj;
            }
        }
        for j in (0..n).rev() {
            let mut s = y[j];
            for i in j + 1..n {
                s -= self.l[j * n + i] * y[i];
            }
            y[j] = s / self.l[j * n + j];
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}
