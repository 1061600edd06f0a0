//! Correctors, the multiscale coarse basis and the coarse Galerkin solve.
//!
//! All correctors solve `b(φ, w) = b(λ_z, w)` over the fine space
//! `V^fs = ker I_H`, possibly truncated to a patch, as a saddle point system
//! whose constraint rows are rows of the interpolation matrix.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::coefficient::ElementCoefficient;
use crate::fem::{assemble_stiffness, element_matrix, DofMap, Form, NO_DOF};
use crate::linalg::{dot, filter_constraint_rows, norm_inf, ConstrainedSolver, CsrMatrix};
use crate::mesh::{MeshHierarchy, Patch};
use crate::quasi_interp::{InterpolationOperator, OperatorKind};
use crate::Error;

/// Relative tolerance of the corrector saddle solves.
pub const CORRECTOR_TOL: f64 = 1e-10;

/// How the localization order `k` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KPolicy {
    Fixed(usize),
    /// `k = log₂(1/H) + 1` with `H = 1/n_H`
    Tied,
    /// `k = ⌈2 ln(1/H) + ½ ln(β/α)⌉`
    Theory,
    /// no localization
    Global,
}

impl KPolicy {
    /// `None` means the global (unlocalized) method.
    pub fn resolve(&self, n_coarse: usize, contrast: f64) -> Option<usize> {
        let inv_h = n_coarse as f64;
        match *self {
            KPolicy::Fixed(k) => Some(k),
            KPolicy::Tied => Some(inv_h.log2().round() as usize + 1),
            KPolicy::Theory => Some(((2.0 * inv_h.ln() + 0.5 * contrast.max(1.0).ln()).ceil() as usize).max(1)),
            KPolicy::Global => None,
        }
    }
}

impl fmt::Display for KPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KPolicy::Fixed(k) => write!(f, "{k}"),
            KPolicy::Tied => f.write_str("tied"),
            KPolicy::Theory => f.write_str("theory"),
            KPolicy::Global => f.write_str("global"),
        }
    }
}

impl FromStr for KPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "tied" => Ok(KPolicy::Tied),
            "theory" => Ok(KPolicy::Theory),
            "global" => Ok(KPolicy::Global),
            t => match t.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(KPolicy::Fixed(k)),
                _ => Err(Error::InvalidParameter(format!(
                    "k must be a positive integer, tied, theory or global; got {s:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Localization {
    /// one corrector problem per node on `ω_{z,k}`
    Nodal,
    /// one problem per (element, vertex) pair on `ω_{T,k}`, summed per node
    Element,
}

impl fmt::Display for Localization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Localization::Nodal => "nodal",
            Localization::Element => "element",
        })
    }
}

impl FromStr for Localization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "nodal" => Ok(Localization::Nodal),
            "element" => Ok(Localization::Element),
            _ => Err(Error::InvalidParameter(format!("unknown localization {s:?}"))),
        }
    }
}

/// Sparse vector over fine interior dofs, sorted by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn from_dense(v: &[f64]) -> Self {
        let (indices, values) = v.iter().enumerate().filter(|(_, &x)| x != 0.0).map(|(i, &x)| (i, x)).unzip();
        SparseVec { indices, values }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.add_to(1.0, &mut out);
        out
    }

    pub fn add_to(&self, s: f64, out: &mut [f64]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i] += s * v;
        }
    }

    pub fn dot_dense(&self, d: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| v * d[i]).sum()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    fn from_map(map: BTreeMap<usize, f64>) -> Self {
        let (indices, values) = map.into_iter().unzip();
        SparseVec { indices, values }
    }
}

/// A corrector `φ` of one coarse node (or of one (element, vertex) pair).
#[derive(Debug, Clone)]
pub struct Corrector {
    pub node: usize,
    /// `None` for the global corrector
    pub order: Option<usize>,
    pub localization: Localization,
    /// values on fine interior dofs; zero outside the patch
    pub values: SparseVec,
    /// `None` for the global corrector
    pub patch: Option<Patch>,
    /// `‖I_H φ‖∞`
    pub constraint_residual: f64,
    pub solves: usize,
}

/// Modified nodal basis `ψ_z = λ_z − φ_z` for every interior coarse node.
#[derive(Debug, Clone)]
pub struct CoarseBasis {
    pub kind: OperatorKind,
    pub order: Option<usize>,
    pub localization: Localization,
    /// coarse vertex ids in coarse dof order
    pub nodes: Vec<usize>,
    pub psi: Vec<SparseVec>,
    pub solves: usize,
    /// largest `‖I_H φ_z‖∞` over the correctors
    pub constraint_residual: f64,
}

#[derive(Debug, Clone)]
pub struct CoarseSolution {
    /// per interior coarse node, in coarse dof order
    pub coefficients: Vec<f64>,
    /// `Σ c_z ψ_z` on fine interior dofs
    pub lifted: Vec<f64>,
    pub coarse_matrix: DMatrix<f64>,
    /// largest `|A − Aᵀ|` entry relative to the largest entry, before
    /// symmetrization
    pub asymmetry: f64,
    pub h: f64,
    pub order: Option<usize>,
    pub kind: OperatorKind,
    pub localization: Localization,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct DecayProfile {
    pub node: usize,
    /// `‖a^{1/2} ∇φ_z‖²`
    pub total_energy: f64,
    /// `(k, ‖a^{1/2} ∇φ_z‖²_{Ω∖ω_{z,k}})`
    pub tails: Vec<(usize, f64)>,
}

/// Fine-scale problem data shared by all corrector solves.
pub struct LodProblem<'a> {
    hier: &'a MeshHierarchy,
    coeff: &'a ElementCoefficient,
    op: &'a InterpolationOperator,
    dofs: DofMap,
    stiffness: CsrMatrix,
}

/// Factored saddle system on one patch.
struct PatchSystem {
    /// fine interior dofs of the patch, ascending
    dofs: Vec<usize>,
    /// global dof → local index, `NO_DOF` outside
    local: Vec<usize>,
    solver: ConstrainedSolver,
}

impl<'a> LodProblem<'a> {
    pub fn new(
        hier: &'a MeshHierarchy,
        coeff: &'a ElementCoefficient,
        op: &'a InterpolationOperator,
    ) -> Result<Self, Error> {
        let dofs = DofMap::interior(hier.fine());
        if op.fine_dofs().len() != dofs.len() || op.coarse_dofs().len() != hier.coarse().num_interior_vertices() {
            return Err(Error::LengthMismatch { expected: dofs.len(), found: op.fine_dofs().len() });
        }
        let stiffness = assemble_stiffness(hier.fine(), coeff.fine(), &dofs)?;
        Ok(Self { hier, coeff, op, dofs, stiffness })
    }

    pub fn hierarchy(&self) -> &MeshHierarchy {
        self.hier
    }

    pub fn coefficient(&self) -> &ElementCoefficient {
        self.coeff
    }

    pub fn operator(&self) -> &InterpolationOperator {
        self.op
    }

    /// Fine stiffness on interior dofs.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn fine_dofs(&self) -> &DofMap {
        &self.dofs
    }

    /// Prolonged coarse hat `λ_z` on fine interior dofs.
    pub fn hat(&self, z: usize) -> SparseVec {
        let p = self.hier.prolongation();
        let mut map = BTreeMap::new();
        for &t in self.hier.coarse().vertex_triangles(z) {
            for &ft in self.hier.children(t) {
                for v in self.hier.fine().triangle(ft) {
                    let d = self.dofs.dof(v);
                    if d != NO_DOF {
                        let x = p.get(v, z);
                        if x != 0.0 {
                            map.insert(d, x);
                        }
                    }
                }
            }
        }
        SparseVec::from_map(map)
    }

    fn check_node(&self, z: usize) -> Result<(), Error> {
        let c = self.hier.coarse();
        if z >= c.num_vertices() {
            return Err(Error::OutOfRange { what: "coarse vertex", id: z, len: c.num_vertices() });
        }
        if c.is_boundary(z) {
            return Err(Error::BoundaryVertex(z));
        }
        Ok(())
    }

    fn patch_system(&self, mask: &[bool]) -> Result<PatchSystem, Error> {
        let verts = self.hier.fine_interior_vertices(mask);
        let dofs: Vec<usize> = verts.iter().map(|&v| self.dofs.dof(v)).collect();
        let mut local = vec![NO_DOF; self.dofs.len()];
        for (l, &d) in dofs.iter().enumerate() {
            local[d] = l;
        }
        let k = self.stiffness.principal_submatrix(&dofs);
        let coarse_rows: Vec<usize> =
            self.hier.coarse_interior_vertices_in(mask).into_iter().map(|z| self.op.coarse_dofs().dof(z)).collect();
        let c = self.op.matrix().submatrix_mapped(&coarse_rows, &local, dofs.len());
        let rows: Vec<Vec<(usize, f64)>> = (0..c.nrows())
            .map(|i| {
                let (cols, vals) = c.row(i);
                cols.iter().copied().zip(vals.iter().copied()).collect()
            })
            .collect();
        let kept = filter_constraint_rows(&rows);
        let kept_rows: Vec<Vec<(usize, f64)>> = kept.into_iter().map(|i| rows[i].clone()).collect();
        let c = CsrMatrix::from_rows(dofs.len(), &kept_rows);
        let (solver, _) = ConstrainedSolver::new_pruned(k, c)?;
        Ok(PatchSystem { dofs, local, solver })
    }

    /// `b_S(λ_y, φ_i)` for the local dofs of `sys`, with `b_S` restricted to
    /// the fine children of the coarse triangles `on`.
    fn hat_rhs(&self, sys: &PatchSystem, y: usize, on: &[usize]) -> Vec<f64> {
        let fine = self.hier.fine();
        let p = self.hier.prolongation();
        let a = self.coeff.fine();
        let mut f = vec![0.0; sys.dofs.len()];
        for &t in on {
            for &ft in self.hier.children(t) {
                let tri = fine.triangle(ft);
                let lam: [f64; 3] = std::array::from_fn(|j| p.get(tri[j], y));
                if lam.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let e = element_matrix(fine, ft, Form::Stiffness);
                for l in 0..3 {
                    let d = self.dofs.dof(tri[l]);
                    if d == NO_DOF || sys.local[d] == NO_DOF {
                        continue;
                    }
                    f[sys.local[d]] += a[ft] * (0..3).map(|j| e[l][j] * lam[j]).sum::<f64>();
                }
            }
        }
        f
    }

    fn solve_on(&self, sys: &PatchSystem, y: usize, on: &[usize]) -> Result<SparseVec, Error> {
        let f = self.hat_rhs(sys, y, on);
        let g = vec![0.0; sys.solver.num_constraints()];
        let sol = sys.solver.solve(&f, &g, CORRECTOR_TOL)?;
        let mut map = BTreeMap::new();
        for (l, &x) in sol.primal.iter().enumerate() {
            if x != 0.0 {
                map.insert(sys.dofs[l], x);
            }
        }
        Ok(SparseVec::from_map(map))
    }

    fn constraint_residual(&self, v: &SparseVec) -> f64 {
        norm_inf(&self.op.apply(&v.to_dense(self.dofs.len())))
    }

    fn full_mask(&self) -> Vec<bool> {
        vec![true; self.hier.coarse().num_triangles()]
    }

    pub fn corrector_global(&self, z: usize) -> Result<Corrector, Error> {
        self.check_node(z)?;
        let sys = self.patch_system(&self.full_mask())?;
        self.finish(
            z,
            None,
            Localization::Nodal,
            None,
            self.solve_on(&sys, z, self.hier.coarse().vertex_triangles(z))?,
            1,
        )
    }

    pub fn corrector_local(&self, z: usize, k: usize) -> Result<Corrector, Error> {
        self.check_node(z)?;
        let patch = self.hier.nodal_patch(z, k)?;
        let sys = self.patch_system(&patch.mask(self.hier.coarse().num_triangles()))?;
        let v = self.solve_on(&sys, z, self.hier.coarse().vertex_triangles(z))?;
        self.finish(z, Some(k), Localization::Nodal, Some(patch), v, 1)
    }

    /// `ψ̃_{T,y,k}` on `ω_{T,k}` with the right side restricted to `T`.
    pub fn twostep_element(&self, t: usize, y: usize, k: usize) -> Result<Corrector, Error> {
        self.check_node(y)?;
        if !self.hier.coarse().triangle(t).contains(&y) {
            return Err(Error::InvalidParameter(format!("vertex {y} is not a corner of coarse triangle {t}")));
        }
        let patch = self.hier.element_patch(t, k)?;
        let sys = self.patch_system(&patch.mask(self.hier.coarse().num_triangles()))?;
        let v = self.solve_on(&sys, y, &[t])?;
        self.finish(y, Some(k), Localization::Element, Some(patch), v, 1)
    }

    /// `φ_{z,k} = Σ_{T ∋ z} ψ̃_{T,z,k}`
    pub fn corrector_twostep(&self, z: usize, k: usize) -> Result<Corrector, Error> {
        self.check_node(z)?;
        let mut acc = vec![0.0; self.dofs.len()];
        let tris = self.hier.coarse().vertex_triangles(z);
        for &t in tris {
            self.twostep_element(t, z, k)?.values.add_to(1.0, &mut acc);
        }
        self.finish(z, Some(k), Localization::Element, None, SparseVec::from_dense(&acc), tris.len())
    }

    fn finish(
        &self,
        node: usize,
        order: Option<usize>,
        localization: Localization,
        patch: Option<Patch>,
        values: SparseVec,
        solves: usize,
    ) -> Result<Corrector, Error> {
        let constraint_residual = self.constraint_residual(&values);
        Ok(Corrector { node, order, localization, values, patch, constraint_residual, solves })
    }

    /// Correctors of every interior coarse node in coarse dof order. Patches
    /// that coincide share one factorization.
    pub fn correctors(&self, order: Option<usize>, localization: Localization) -> Result<Vec<Corrector>, Error> {
        let coarse = self.hier.coarse();
        let nodes = self.op.coarse_dofs().dof_to_vertex().to_vec();
        let nt = coarse.num_triangles();
        // (problem mask) -> [(node, rhs triangles, slot)]
        type Job = (usize, Vec<usize>);
        let mut groups: BTreeMap<Vec<usize>, (Vec<bool>, Vec<Job>)> = BTreeMap::new();
        let mut add = |mask: Vec<bool>, job: Job| {
            let key: Vec<usize> = (0..nt).filter(|&t| mask[t]).collect();
            groups.entry(key).or_insert_with(|| (mask, Vec::new())).1.push(job);
        };
        match (order, localization) {
            (None, _) => {
                for &z in &nodes {
                    add(self.full_mask(), (z, coarse.vertex_triangles(z).to_vec()));
                }
            }
            (Some(k), Localization::Nodal) => {
                for &z in &nodes {
                    add(self.hier.nodal_patch(z, k)?.mask(nt), (z, coarse.vertex_triangles(z).to_vec()));
                }
            }
            (Some(k), Localization::Element) => {
                for t in 0..nt {
                    let corners: Vec<usize> =
                        coarse.triangle(t).into_iter().filter(|&y| !coarse.is_boundary(y)).collect();
                    if corners.is_empty() {
                        continue;
                    }
                    let mask = self.hier.element_patch(t, k)?.mask(nt);
                    for y in corners {
                        add(mask.clone(), (y, vec![t]));
                    }
                }
            }
        }
        let groups: Vec<(Vec<bool>, Vec<Job>)> = groups.into_values().collect();
        let solved: Vec<Vec<(usize, usize, SparseVec)>> = groups
            .par_iter()
            .map(|(mask, jobs)| {
                let sys = self.patch_system(mask)?;
                jobs.par_iter()
                    .map(|(y, on)| Ok((*y, on[0], self.solve_on(&sys, *y, on)?)))
                    .collect::<Result<Vec<_>, Error>>()
            })
            .collect::<Result<_, Error>>()?;

        // sum per node in a fixed order: by node, then by first rhs triangle
        let mut per_node: BTreeMap<usize, Vec<(usize, SparseVec)>> = BTreeMap::new();
        for (y, t, v) in solved.into_iter().flatten() {
            per_node.entry(y).or_default().push((t, v));
        }
        nodes
            .par_iter()
            .map(|&z| {
                let mut parts = per_node.get(&z).cloned().unwrap_or_default();
                parts.sort_by_key(|(t, _)| *t);
                let solves = parts.len();
                let values = if parts.len() == 1 {
                    parts.pop().unwrap().1
                } else {
                    let mut acc = vec![0.0; self.dofs.len()];
                    for (_, v) in &parts {
                        v.add_to(1.0, &mut acc);
                    }
                    SparseVec::from_dense(&acc)
                };
                let patch = match (order, localization) {
                    (Some(k), Localization::Nodal) => Some(self.hier.nodal_patch(z, k)?),
                    _ => None,
                };
                self.finish(z, order, localization, patch, values, solves)
            })
            .collect()
    }

    pub fn basis_from(&self, correctors: &[Corrector]) -> CoarseBasis {
        let psi = correctors
            .iter()
            .map(|c| {
                let mut map: BTreeMap<usize, f64> =
                    self.hat(c.node).indices.iter().copied().zip(self.hat(c.node).values).collect();
                for (&i, &v) in c.values.indices.iter().zip(&c.values.values) {
                    *map.entry(i).or_insert(0.0) -= v;
                }
                SparseVec::from_map(map)
            })
            .collect();
        let first = correctors.first();
        CoarseBasis {
            kind: self.op.kind(),
            order: first.and_then(|c| c.order),
            localization: first.map(|c| c.localization).unwrap_or(Localization::Nodal),
            nodes: correctors.iter().map(|c| c.node).collect(),
            psi,
            solves: correctors.iter().map(|c| c.solves).sum(),
            constraint_residual: correctors.iter().map(|c| c.constraint_residual).fold(0.0, f64::max),
        }
    }

    pub fn basis(&self, order: Option<usize>, localization: Localization) -> Result<CoarseBasis, Error> {
        let cs = self.correctors(order, localization)?;
        Ok(self.basis_from(&cs))
    }

    /// Galerkin solve in the span of `basis` for the fine load vector `load`.
    pub fn solve_coarse(&self, basis: &CoarseBasis, load: &[f64]) -> Result<CoarseSolution, Error> {
        let n = self.dofs.len();
        if load.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: load.len() });
        }
        let m = basis.psi.len();
        let fine = self.hier.fine();
        // fine (i, j) bounding boxes of the supports, grown by one for K ψ
        let bbox: Vec<[usize; 4]> = basis
            .psi
            .iter()
            .map(|p| {
                let mut b = [usize::MAX, 0, usize::MAX, 0];
                for &d in &p.indices {
                    let (i, j) = fine.vertex_ij(self.dofs.vertex(d));
                    b = [b[0].min(i), b[1].max(i), b[2].min(j), b[3].max(j)];
                }
                b
            })
            .collect();
        let overlaps = |a: &[usize; 4], b: &[usize; 4]| {
            a[0] <= b[1] + 1 && b[0] <= a[1] + 1 && a[2] <= b[3] + 1 && b[2] <= a[3] + 1
        };
        let rows: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|z| {
                let kpsi = self.stiffness.mul_vec(&basis.psi[z].to_dense(n));
                (0..m).map(|y| if overlaps(&bbox[y], &bbox[z]) { basis.psi[y].dot_dense(&kpsi) } else { 0.0 }).collect()
            })
            .collect();
        let raw = DMatrix::from_fn(m, m, |y, z| rows[z][y]);
        let scale = raw.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let asymmetry = if scale > 0.0 { (&raw - raw.transpose()).abs().max() / scale } else { 0.0 };
        let a = (&raw + raw.transpose()) * 0.5;
        let g = DVector::from_iterator(m, basis.psi.iter().map(|p| p.dot_dense(load)));
        let coefficients: Vec<f64> = if m == 0 {
            Vec::new()
        } else {
            let chol = a.clone().cholesky().ok_or_else(|| {
                Error::IndefiniteCoarse(format!(
                    "{} × {} coarse matrix ({} basis, k = {:?})",
                    m, m, basis.kind, basis.order
                ))
            })?;
            chol.solve(&g).iter().copied().collect()
        };
        let mut lifted = vec![0.0; n];
        for (c, p) in coefficients.iter().zip(&basis.psi) {
            p.add_to(*c, &mut lifted);
        }
        Ok(CoarseSolution {
            coefficients,
            lifted,
            coarse_matrix: a,
            asymmetry,
            h: self.hier.coarse().mesh_size(),
            order: basis.order,
            kind: basis.kind,
            localization: basis.localization,
            beta: self.coeff.beta(),
        })
    }

    /// Per fine triangle energies `a_t vᵀ K_t v` of a fine interior vector.
    pub fn element_energies(&self, v: &[f64]) -> Vec<f64> {
        let fine = self.hier.fine();
        let a = self.coeff.fine();
        (0..fine.num_triangles())
            .map(|t| {
                let tri = fine.triangle(t);
                let x: [f64; 3] = std::array::from_fn(|j| {
                    let d = self.dofs.dof(tri[j]);
                    if d == NO_DOF {
                        0.0
                    } else {
                        v[d]
                    }
                });
                let e = element_matrix(fine, t, Form::Stiffness);
                let mut s = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        s += x[i] * e[i][j] * x[j];
                    }
                }
                a[t] * s
            })
            .collect()
    }

    /// Energy of the global corrector of `z` outside `ω_{z,k}` for each `k`.
    pub fn decay_profile(&self, z: usize, ks: &[usize]) -> Result<DecayProfile, Error> {
        let phi = self.corrector_global(z)?;
        let dense = phi.values.to_dense(self.dofs.len());
        let energies = self.element_energies(&dense);
        let total_energy = dot(&dense, &self.stiffness.mul_vec(&dense));
        let nt = self.hier.coarse().num_triangles();
        let tails = ks
            .iter()
            .map(|&k| {
                let mask = self.hier.nodal_patch(z, k)?.mask(nt);
                let tail: f64 =
                    energies.iter().enumerate().filter(|(t, _)| !mask[self.hier.parent(*t)]).map(|(_, e)| e).sum();
                Ok((k, tail))
            })
            .collect::<Result<_, Error>>()?;
        Ok(DecayProfile { node: z, total_energy, tails })
    }
}

/// Least-squares fit `y ≈ c + s x`; returns `(s, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let s = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (s, r2)
}
