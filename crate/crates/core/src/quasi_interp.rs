//! Quasi-interpolation operators `I_H : V_h → V_H` as sparse matrices, their
//! numerical constants, and the one-dimensional model computations for the
//! weighted operators.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::coefficient::ElementCoefficient;
use crate::fem::{assemble_local, element_matrix, DofMap, Form, NO_DOF};
use crate::linalg::{largest_generalized_eig, CsrMatrix, EigenOptions};
use crate::mesh::MeshHierarchy;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OperatorKind {
    Clement,
    PuClement,
    AwClement,
    Proj,
    AwProj,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 5] = [
        OperatorKind::Clement,
        OperatorKind::PuClement,
        OperatorKind::AwClement,
        OperatorKind::Proj,
        OperatorKind::AwProj,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            OperatorKind::Clement => "clement",
            OperatorKind::PuClement => "pu-clement",
            OperatorKind::AwClement => "aw-clement",
            OperatorKind::Proj => "proj",
            OperatorKind::AwProj => "aw-proj",
        }
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self, OperatorKind::AwClement | OperatorKind::AwProj)
    }

    pub fn is_projective(&self) -> bool {
        matches!(self, OperatorKind::Proj | OperatorKind::AwProj)
    }

    /// The coefficient-independent counterpart.
    pub fn unweighted(&self) -> OperatorKind {
        match self {
            OperatorKind::AwClement => OperatorKind::Clement,
            OperatorKind::AwProj => OperatorKind::Proj,
            k => *k,
        }
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OperatorKind::ALL.into_iter().find(|k| k.as_str() == s.trim()).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "unknown operator {s:?}; expected one of clement, pu-clement, aw-clement, proj, aw-proj"
            ))
        })
    }
}

/// `I_H` restricted to interior dofs: row `z` gives the nodal value at the
/// interior coarse vertex `z` as a functional of the interior fine values.
#[derive(Debug, Clone)]
pub struct InterpolationOperator {
    kind: OperatorKind,
    matrix: CsrMatrix,
    coarse_dofs: DofMap,
    fine_dofs: DofMap,
}

impl InterpolationOperator {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// Coarse interior dof × fine interior dof.
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn coarse_dofs(&self) -> &DofMap {
        &self.coarse_dofs
    }

    pub fn fine_dofs(&self) -> &DofMap {
        &self.fine_dofs
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(v)
    }

    /// `I_H ∘ prolongation` on interior coarse dofs.
    pub fn coarse_restriction(&self, hier: &MeshHierarchy) -> CsrMatrix {
        self.matrix.matmul(&interior_prolongation(hier))
    }
}

/// Prolongation restricted to interior fine rows and interior coarse columns.
pub fn interior_prolongation(hier: &MeshHierarchy) -> CsrMatrix {
    let fine = DofMap::interior(hier.fine());
    let coarse = DofMap::interior(hier.coarse());
    hier.prolongation().submatrix_mapped(fine.dof_to_vertex(), coarse.vertex_to_dof(), coarse.len())
}

pub fn build_operator(
    kind: OperatorKind,
    hier: &MeshHierarchy,
    coeff: &ElementCoefficient,
) -> Result<InterpolationOperator, Error> {
    match kind {
        OperatorKind::Clement => build_clement(hier),
        OperatorKind::PuClement => build_pu_clement(hier),
        OperatorKind::AwClement => build_aweighted(hier, coeff),
        OperatorKind::Proj => build_local_proj(hier, None),
        OperatorKind::AwProj => build_local_proj(hier, Some(coeff)),
    }
}

pub fn build_clement(hier: &MeshHierarchy) -> Result<InterpolationOperator, Error> {
    let ones = vec![1.0; hier.fine().num_triangles()];
    Ok(assemble_rows(hier, OperatorKind::Clement, |z| clement_row(hier, &ones, z)))
}

pub fn build_aweighted(hier: &MeshHierarchy, coeff: &ElementCoefficient) -> Result<InterpolationOperator, Error> {
    check_coeff(hier, coeff)?;
    Ok(assemble_rows(hier, OperatorKind::AwClement, |z| clement_row(hier, coeff.fine(), z)))
}

pub fn build_pu_clement(hier: &MeshHierarchy) -> Result<InterpolationOperator, Error> {
    Ok(assemble_rows(hier, OperatorKind::PuClement, |z| pu_row(hier, z)))
}

/// Local (weighted) L² projections onto `V_H|ω_z`, evaluated at `z`.
/// The local space spans the hats of the vertices of `ω_z` off `∂Ω`.
pub fn build_local_proj(
    hier: &MeshHierarchy,
    coeff: Option<&ElementCoefficient>,
) -> Result<InterpolationOperator, Error> {
    let ones;
    let (w, kind) = match coeff {
        Some(c) => {
            check_coeff(hier, c)?;
            (c.fine(), OperatorKind::AwProj)
        }
        None => {
            ones = vec![1.0; hier.fine().num_triangles()];
            (&ones[..], OperatorKind::Proj)
        }
    };
    Ok(assemble_rows(hier, kind, |z| proj_row(hier, w, z)))
}

fn check_coeff(hier: &MeshHierarchy, coeff: &ElementCoefficient) -> Result<(), Error> {
    let n = hier.fine().num_triangles();
    if coeff.fine().len() != n {
        return Err(Error::LengthMismatch { expected: n, found: coeff.fine().len() });
    }
    if let Some((element, &value)) = coeff.fine().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveCoefficient { element, value });
    }
    Ok(())
}

/// Rows indexed by fine vertex; boundary columns are dropped here.
fn assemble_rows<F>(hier: &MeshHierarchy, kind: OperatorKind, row: F) -> InterpolationOperator
where
    F: Fn(usize) -> Vec<(usize, f64)> + Sync,
{
    let coarse_dofs = DofMap::interior(hier.coarse());
    let fine_dofs = DofMap::interior(hier.fine());
    let rows: Vec<Vec<(usize, f64)>> = coarse_dofs
        .dof_to_vertex()
        .par_iter()
        .map(|&z| {
            row(z)
                .into_iter()
                .filter_map(|(v, x)| {
                    let d = fine_dofs.dof(v);
                    (d != NO_DOF).then_some((d, x))
                })
                .collect()
        })
        .collect();
    let matrix = CsrMatrix::from_rows(fine_dofs.len(), &rows);
    InterpolationOperator { kind, matrix, coarse_dofs, fine_dofs }
}

fn patch_fine_triangles(hier: &MeshHierarchy, z: usize) -> Vec<usize> {
    let mut tris: Vec<usize> =
        hier.coarse().vertex_triangles(z).iter().flat_map(|&k| hier.children(k).iter().copied()).collect();
    tris.sort_unstable();
    tris
}

fn sorted_row(map: HashMap<usize, f64>) -> Vec<(usize, f64)> {
    let mut row: Vec<(usize, f64)> = map.into_iter().collect();
    row.sort_unstable_by_key(|&(c, _)| c);
    row
}

/// `(w λ_z, φ_v) / (w λ_z, 1)` for every fine vertex `v` of `ω_z`.
fn clement_row(hier: &MeshHierarchy, w: &[f64], z: usize) -> Vec<(usize, f64)> {
    let fine = hier.fine();
    let p = hier.prolongation();
    let mut acc: HashMap<usize, f64> = HashMap::new();
    for t in patch_fine_triangles(hier, z) {
        let tri = fine.triangle(t);
        let e = element_matrix(fine, t, Form::Mass);
        let lam: [f64; 3] = std::array::from_fn(|j| p.get(tri[j], z));
        for l in 0..3 {
            let s: f64 = (0..3).map(|j| lam[j] * e[j][l]).sum();
            *acc.entry(tri[l]).or_insert(0.0) += w[t] * s;
        }
    }
    let row = sorted_row(acc);
    let denom: f64 = row.iter().map(|(_, v)| v).sum();
    row.into_iter().map(|(c, v)| (c, v / denom)).collect()
}

fn proj_row(hier: &MeshHierarchy, w: &[f64], z: usize) -> Vec<(usize, f64)> {
    let coarse = hier.coarse();
    let fine = hier.fine();
    let p = hier.prolongation();
    let mut ys: Vec<usize> = coarse
        .vertex_triangles(z)
        .iter()
        .flat_map(|&k| coarse.triangle(k))
        .filter(|&v| !coarse.is_boundary(v))
        .collect();
    ys.sort_unstable();
    ys.dedup();
    let ny = ys.len();
    let mut mz = DMatrix::<f64>::zeros(ny, ny);
    let mut b: HashMap<usize, Vec<f64>> = HashMap::new();
    for t in patch_fine_triangles(hier, z) {
        let tri = fine.triangle(t);
        let e = element_matrix(fine, t, Form::Mass);
        let parent = coarse.triangle(hier.parent(t));
        // (local y index, hat values at the three fine vertices)
        let hats: Vec<(usize, [f64; 3])> = parent
            .iter()
            .filter_map(|c| ys.binary_search(c).ok().map(|i| (i, std::array::from_fn(|j| p.get(tri[j], *c)))))
            .collect();
        for &(ia, la) in &hats {
            let ea: [f64; 3] = std::array::from_fn(|l| w[t] * (0..3).map(|j| la[j] * e[j][l]).sum::<f64>());
            for &(ib, lb) in &hats {
                mz[(ia, ib)] += (0..3).map(|l| ea[l] * lb[l]).sum::<f64>();
            }
            for l in 0..3 {
                b.entry(tri[l]).or_insert_with(|| vec![0.0; ny])[ia] += ea[l];
            }
        }
    }
    let iz = ys.binary_search(&z).expect("z is in its own patch");
    let mut ez = DVector::zeros(ny);
    ez[iz] = 1.0;
    let c = mz.cholesky().expect("local mass matrix is SPD").solve(&ez);
    let mut row: Vec<(usize, f64)> =
        b.into_iter().map(|(v, col)| (v, col.iter().zip(c.iter()).map(|(x, y)| x * y).sum())).collect();
    row.sort_unstable_by_key(|&(v, _)| v);
    row
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out
}

const PU_QUAD_POINTS: usize = 10;

/// `(λ̃_z, φ_v) / (λ̃_z, 1)` with `λ̃_z = λ_z / Σ_{y interior} λ_y`.
///
/// `λ̃_z` is constant along rays from a boundary vertex of a coarse triangle,
/// so each fine triangle is integrated with a Duffy map collapsed at its
/// vertex closest to that boundary vertex.
fn pu_row(hier: &MeshHierarchy, z: usize) -> Vec<(usize, f64)> {
    let coarse = hier.coarse();
    let fine = hier.fine();
    let p = hier.prolongation();
    let gl = gauss_legendre(PU_QUAD_POINTS);
    let mut acc: HashMap<usize, f64> = HashMap::new();
    for t in patch_fine_triangles(hier, z) {
        let k = hier.parent(t);
        let kv = coarse.triangle(k);
        let interior: [bool; 3] = std::array::from_fn(|j| !coarse.is_boundary(kv[j]));
        let iz = kv.iter().position(|&v| v == z).unwrap();
        let tri = fine.triangle(t);
        // hats of K at fine vertices of t
        let lam: [[f64; 3]; 3] = std::array::from_fn(|j| std::array::from_fn(|c| p.get(tri[j], kv[c])));
        let sum_at = |b: &[f64; 3]| -> f64 {
            // coarse hats are linear on t: combine vertex values with weights b
            (0..3).filter(|&c| interior[c]).map(|c| (0..3).map(|j| b[j] * lam[j][c]).sum::<f64>()).sum()
        };
        let weight_of = |b: &[f64; 3]| -> f64 {
            let lz: f64 = (0..3).map(|j| b[j] * lam[j][iz]).sum();
            let s = sum_at(b);
            if s > 0.0 {
                lz / s
            } else {
                0.0
            }
        };
        let area = fine.triangle_area();
        let n_interior = interior.iter().filter(|&&i| i).count();
        if n_interior == 3 {
            // λ̃_z = λ_z, integrate exactly
            let e = element_matrix(fine, t, Form::Mass);
            for l in 0..3 {
                *acc.entry(tri[l]).or_insert(0.0) += (0..3).map(|j| lam[j][iz] * e[j][l]).sum::<f64>();
            }
            continue;
        }
        if n_interior == 1 {
            // λ̃_z = 1
            for &v in &tri {
                *acc.entry(v).or_insert(0.0) += area / 3.0;
            }
            continue;
        }
        let apex = (0..3)
            .min_by(|&a, &b| {
                let sa = sum_at(&std::array::from_fn(|j| (j == a) as u8 as f64));
                let sb = sum_at(&std::array::from_fn(|j| (j == b) as u8 as f64));
                sa.total_cmp(&sb)
            })
            .unwrap();
        let (o1, o2) = ((apex + 1) % 3, (apex + 2) % 3);
        let mut local = [0.0; 3];
        for &(u, wu) in &gl {
            for &(s, ws) in &gl {
                // barycentric coordinates on t of apex + u((1-s)(o1-apex) + s(o2-apex))
                let mut b = [0.0; 3];
                b[apex] = 1.0 - u;
                b[o1] = u * (1.0 - s);
                b[o2] = u * s;
                let f = weight_of(&b) * wu * ws * u * 2.0 * area;
                for j in 0..3 {
                    local[j] += f * b[j];
                }
            }
        }
        for j in 0..3 {
            *acc.entry(tri[j]).or_insert(0.0) += local[j];
        }
    }
    let row = sorted_row(acc);
    let denom: f64 = row.iter().map(|(_, v)| v).sum();
    row.into_iter().map(|(c, v)| (c, v / denom)).collect()
}

#[derive(Debug, Clone)]
pub struct Qi2Report {
    pub min_singular: f64,
    pub max_singular: f64,
    pub invertible: bool,
    /// right singular vector of the smallest singular value when singular
    pub near_null: Option<Vec<f64>>,
}

/// Invertibility of `I_H` restricted to `V_H`.
pub fn verify_qi2(op: &InterpolationOperator, hier: &MeshHierarchy) -> Qi2Report {
    let r = op.coarse_restriction(hier).to_dense();
    let n = r.nrows();
    if n == 0 {
        return Qi2Report { min_singular: 0.0, max_singular: 0.0, invertible: true, near_null: None };
    }
    let svd = r.svd(false, true);
    let sv = &svd.singular_values;
    let (mut imin, mut imax) = (0, 0);
    for i in 0..sv.len() {
        if sv[i] < sv[imin] {
            imin = i;
        }
        if sv[i] > sv[imax] {
            imax = i;
        }
    }
    let invertible = sv[imin] > 1e-12 * sv[imax];
    let near_null = (!invertible).then(|| {
        let vt = svd.v_t.as_ref().expect("requested");
        (0..n).map(|j| vt[(imin, j)]).collect()
    });
    Qi2Report { min_singular: sv[imin], max_singular: sv[imax], invertible, near_null }
}

#[derive(Debug, Clone)]
pub struct QiConstants {
    /// coarse triangles examined
    pub triangles: Vec<usize>,
    /// stability ratio estimate per triangle
    pub per_triangle: Vec<f64>,
    pub c_qip: f64,
    /// `Some(1)` for projective kinds
    pub c_qip_prime: Option<f64>,
    pub c_inv1: Vec<f64>,
    pub c_inv2: Vec<f64>,
}

/// Estimates
/// `sup_v (H⁻² ‖a^{1/2}(v − I_H v)‖²_T + ‖a^{1/2}∇(v − I_H v)‖²_T) / ‖a^{1/2}∇v‖²_{ω_T}`
/// per coarse triangle by power iteration, and the weighted inverse constants.
pub fn estimate_qi3(
    op: &InterpolationOperator,
    hier: &MeshHierarchy,
    coeff: &ElementCoefficient,
    triangles: Option<&[usize]>,
) -> Result<QiConstants, Error> {
    let all: Vec<usize> = (0..hier.coarse().num_triangles()).collect();
    let tris = triangles.map(|t| t.to_vec()).unwrap_or(all);
    let per: Vec<Result<f64, Error>> = tris.par_iter().map(|&t| qi3_triangle(op, hier, coeff, t)).collect();
    let per_triangle = per.into_iter().collect::<Result<Vec<f64>, Error>>()?;
    let inv: Vec<(f64, f64)> = tris.iter().map(|&t| inverse_constants(hier, coeff, t)).collect();
    Ok(QiConstants {
        c_qip: per_triangle.iter().cloned().fold(0.0, f64::max),
        per_triangle,
        c_qip_prime: op.kind().is_projective().then_some(1.0),
        c_inv1: inv.iter().map(|x| x.0).collect(),
        c_inv2: inv.iter().map(|x| x.1).collect(),
        triangles: tris,
    })
}

fn qi3_triangle(
    op: &InterpolationOperator,
    hier: &MeshHierarchy,
    coeff: &ElementCoefficient,
    t: usize,
) -> Result<f64, Error> {
    let coarse = hier.coarse();
    let fine = hier.fine();
    let omega = hier.element_neighborhood(t)?;
    let mask = omega.mask(coarse.num_triangles());
    let omega_tris = hier.fine_triangles_in(&mask);
    let mut local = vec![NO_DOF; fine.num_vertices()];
    let mut n = 0;
    let mut touches_boundary = false;
    for &ft in &omega_tris {
        for v in fine.triangle(ft) {
            if fine.is_boundary(v) {
                touches_boundary = true;
            } else if local[v] == NO_DOF {
                local[v] = n;
                n += 1;
            }
        }
    }
    let a = coeff.fine();
    let d = assemble_local(fine, &omega_tris, a, &local, n, Form::Stiffness);
    let m = assemble_local(fine, &omega_tris, a, &local, n, Form::Mass);

    // fine dofs of the closed triangle T and the operator rows of its vertices
    let t_tris = hier.children(t).to_vec();
    let mut t_local = vec![NO_DOF; fine.num_vertices()];
    let mut t_to_omega = Vec::new();
    for &ft in &t_tris {
        for v in fine.triangle(ft) {
            if local[v] != NO_DOF && t_local[v] == NO_DOF {
                t_local[v] = t_to_omega.len();
                t_to_omega.push(local[v]);
            }
        }
    }
    let nt = t_to_omega.len();
    let h = coarse.mesh_size();
    let kt = assemble_local(fine, &t_tris, a, &t_local, nt, Form::Stiffness);
    let mt = assemble_local(fine, &t_tris, a, &t_local, nt, Form::Mass);
    let mut at_trip = Vec::new();
    for (mat, s) in [(&kt, 1.0), (&mt, 1.0 / (h * h))] {
        for i in 0..nt {
            let (cols, vals) = mat.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                at_trip.push((i, j, s * v));
            }
        }
    }
    let at = CsrMatrix::from_triplets(nt, nt, at_trip);

    let fine_dofs = op.fine_dofs();
    let vertex_cols: Vec<usize> = {
        let mut map = vec![NO_DOF; fine_dofs.len()];
        for (v, &l) in local.iter().enumerate() {
            if l != NO_DOF {
                map[fine_dofs.dof(v)] = l;
            }
        }
        map
    };
    let zs: Vec<usize> = coarse.triangle(t).into_iter().filter(|&z| !coarse.is_boundary(z)).collect();
    let rows: Vec<usize> = zs.iter().map(|&z| op.coarse_dofs().dof(z)).collect();
    let r = op.matrix().submatrix_mapped(&rows, &vertex_cols, n);
    // hat values at T's fine dofs
    let lt: Vec<Vec<f64>> = zs
        .iter()
        .map(|&z| {
            let mut col = vec![0.0; nt];
            for (v, &l) in t_local.iter().enumerate() {
                if l != NO_DOF {
                    col[l] = hier.prolongation().get(v, z);
                }
            }
            col
        })
        .collect();

    let apply_n = |v: &[f64]| -> Vec<f64> {
        let rv = r.mul_vec(v);
        let mut w: Vec<f64> = t_to_omega.iter().map(|&o| v[o]).collect();
        for (c, col) in rv.iter().zip(&lt) {
            for (wi, li) in w.iter_mut().zip(col) {
                *wi -= c * li;
            }
        }
        let y = at.mul_vec(&w);
        let lty: Vec<f64> = lt.iter().map(|col| col.iter().zip(&y).map(|(a, b)| a * b).sum()).collect();
        let mut out = vec![0.0; n];
        for (i, &o) in t_to_omega.iter().enumerate() {
            out[o] += y[i];
        }
        let back = r.mul_vec_transpose(&lty);
        for (o, b) in out.iter_mut().zip(back) {
            *o -= b;
        }
        out
    };
    let deflation = if touches_boundary { vec![] } else { vec![vec![1.0; n]] };
    let opts = EigenOptions { tol: 1e-4, max_iter: 30, ..Default::default() };
    match largest_generalized_eig(apply_n, &d, &m, &deflation, &opts) {
        Ok(p) => Ok(p.value),
        // a rough estimate is all that is needed; keep the last iterate
        Err(crate::linalg::LinalgError::NoConvergence { history, .. }) => Ok(history.last().copied().unwrap_or(0.0)),
        Err(e) => Err(e.into()),
    }
}

/// `∫ |l|` over a triangle of area `area` for the linear `l` with the given
/// vertex values.
fn integral_abs_linear(vals: [f64; 3], area: f64) -> f64 {
    let mean = (vals[0] + vals[1] + vals[2]) / 3.0;
    let neg = vals.iter().filter(|&&v| v < 0.0).count();
    let negative_part = |v: [f64; 3]| -> f64 {
        // at most one vertex strictly negative, others non-negative
        let Some(i) = (0..3).find(|&i| v[i] < 0.0) else {
            return 0.0;
        };
        let f: Vec<f64> = (0..3).filter(|&j| j != i).map(|j| v[i] / (v[i] - v[j])).collect();
        area * f[0] * f[1] * (-v[i]) / 3.0
    };
    match neg {
        0 => area * mean,
        3 => -area * mean,
        1 => area * mean + 2.0 * negative_part(vals),
        _ => {
            let flipped = [-vals[0], -vals[1], -vals[2]];
            -area * mean + 2.0 * negative_part(flipped)
        }
    }
}

/// Weighted inverse constants `(C_inv1, C_inv2)` on coarse triangle `t`:
/// `‖v‖_∞ ≤ C_inv1 ∫a|v| / ∫a` and `‖v‖_∞ ≤ C_inv2 ‖a^{1/2} v‖ / (∫a)^{1/2}`
/// over linear `v`.
pub fn inverse_constants(hier: &MeshHierarchy, coeff: &ElementCoefficient, t: usize) -> (f64, f64) {
    let fine = hier.fine();
    let kv = hier.coarse().triangle(t);
    let a = coeff.fine();
    let area = fine.triangle_area();
    let kids = hier.children(t);
    // coarse barycentrics at the fine vertices of every child
    let lam: Vec<[[f64; 3]; 3]> = kids
        .iter()
        .map(|&ft| {
            let tri = fine.triangle(ft);
            std::array::from_fn(|j| std::array::from_fn(|c| hier.prolongation().get(tri[j], kv[c])))
        })
        .collect();
    let int_a: f64 = kids.iter().map(|&ft| a[ft] * area).sum();

    let mut m = DMatrix::<f64>::zeros(3, 3);
    for (idx, &ft) in kids.iter().enumerate() {
        let e = element_matrix(fine, ft, Form::Mass);
        for c in 0..3 {
            for d in 0..3 {
                let mut s = 0.0;
                for j in 0..3 {
                    for l in 0..3 {
                        s += lam[idx][j][c] * e[j][l] * lam[idx][l][d];
                    }
                }
                m[(c, d)] += a[ft] * s;
            }
        }
    }
    let minv = m.try_inverse().expect("weighted mass on a triangle is SPD");
    let c2 = (int_a * (0..3).map(|i| minv[(i, i)]).fold(0.0, f64::max)).sqrt();

    // |v| attains its maximum at a vertex; scan the other two values
    let steps = 40;
    let mut c1: f64 = 0.0;
    for top in 0..3 {
        for p in 0..=steps {
            for q in 0..=steps {
                let s = -1.0 + 2.0 * p as f64 / steps as f64;
                let r = -1.0 + 2.0 * q as f64 / steps as f64;
                let mut vv = [0.0; 3];
                vv[top] = 1.0;
                vv[(top + 1) % 3] = s;
                vv[(top + 2) % 3] = r;
                let mut integral = 0.0;
                for (idx, &ft) in kids.iter().enumerate() {
                    let vals: [f64; 3] = std::array::from_fn(|j| (0..3).map(|c| vv[c] * lam[idx][j][c]).sum());
                    integral += a[ft] * integral_abs_linear(vals, area);
                }
                c1 = c1.max(int_a / integral);
            }
        }
    }
    (c1, c2)
}

/// Data of the one-dimensional construction of `η_z` on the reference
/// element `[0, 1]` with `a = β` on `[y − ε, y + ε]` and 1 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaConstruction1D {
    pub y: f64,
    pub eps: f64,
    pub beta: f64,
    pub b1: f64,
    pub b2: f64,
    /// `|I_H η(z') − 0|` and `|I_H η(z) − 1|` for the weighted Clément
    /// nodal functionals on the element
    pub nodal_deviation: [f64; 2],
    /// `‖a^{1/2} η'‖² / ‖a^{1/2} λ_z'‖²` on the element
    pub energy_ratio: f64,
    /// `(b₁/y)² + ((b₂ − b₁)/(1 − y))²`
    pub bound_expression: f64,
}

impl EtaConstruction1D {
    pub fn eta(&self, x: f64) -> f64 {
        if x <= self.y {
            self.b1 * x / self.y
        } else {
            self.b1 * (1.0 - x) / (1.0 - self.y) + self.b2 * (x - self.y) / (1.0 - self.y)
        }
    }
}

/// Exact integral of a piecewise-constant times piecewise-quadratic function:
/// two-point Gauss on every piece between the given breakpoints.
fn integrate_pieces(breaks: &[f64], a: impl Fn(f64) -> f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = 0.5 / 3f64.sqrt();
    breaks
        .windows(2)
        .map(|w| {
            let (l, r) = (w[0], w[1]);
            let (mid, len) = (0.5 * (l + r), r - l);
            let am = a(mid);
            0.5 * len * am * (f(mid - g * len) + f(mid + g * len))
        })
        .sum()
}

pub fn eta_1d(y: f64, eps: f64, beta: f64) -> Result<EtaConstruction1D, Error> {
    if !(eps > 0.0 && eps < y && y + eps < 1.0 && 2.0 * y > eps && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("degenerate 1D geometry y={y}, eps={eps}, beta={beta}")));
    }
    let b1 = -y * y * (3.0 - 3.0 * y - 2.0 * eps) / (eps * (2.0 * y - eps));
    let b2 = (4.0 * y * y * (1.0 - y) - (4.0 * y * (1.0 - y) - eps) * b1) / (y * eps);
    let mut out = EtaConstruction1D {
        y,
        eps,
        beta,
        b1,
        b2,
        nodal_deviation: [0.0; 2],
        energy_ratio: 0.0,
        bound_expression: (b1 / y).powi(2) + ((b2 - b1) / (1.0 - y)).powi(2),
    };
    let a = |x: f64| if (y - eps..=y + eps).contains(&x) { beta } else { 1.0 };
    let breaks = [0.0, y - eps, y, y + eps, 1.0];
    let eta = |x: f64| out.eta(x);
    let lz = |x: f64| x;
    let lzp = |x: f64| 1.0 - x;
    let den_z = integrate_pieces(&breaks, a, lz);
    let den_zp = integrate_pieces(&breaks, a, lzp);
    let iz = integrate_pieces(&breaks, a, |x| eta(x) * lz(x)) / den_z;
    let izp = integrate_pieces(&breaks, a, |x| eta(x) * lzp(x)) / den_zp;
    let deta = |x: f64| if x <= y { b1 / y } else { (b2 - b1) / (1.0 - y) };
    let e_eta = integrate_pieces(&breaks, a, |x| deta(x).powi(2));
    let e_lam = integrate_pieces(&breaks, a, |_| 1.0);
    out.nodal_deviation = [izp.abs(), (iz - 1.0).abs()];
    out.energy_ratio = e_eta / e_lam;
    Ok(out)
}

/// Smallest eigenvalue of `D_z⁻¹ M_z` for the weighted P1 mass on the patch
/// `[0, 2]` (nodes 0, 1, 2) with `a = β` on `[y − ε, y + ε] ⊂ [0, 1]`.
pub fn mu_min_1d(y: f64, eps: f64, beta: f64) -> Result<f64, Error> {
    if !(eps > 0.0 && y - eps > 0.0 && y + eps < 1.0 && beta > 0.0) {
        return Err(Error::InvalidParameter(format!("degenerate 1D geometry y={y}, eps={eps}, beta={beta}")));
    }
    let a = |x: f64| if (y - eps..=y + eps).contains(&x) { beta } else { 1.0 };
    let hats: [&dyn Fn(f64) -> f64; 3] =
        [&|x: f64| (1.0 - x).max(0.0), &|x: f64| if x <= 1.0 { x } else { 2.0 - x }, &|x: f64| (x - 1.0).max(0.0)];
    let breaks = [0.0, y - eps, y + eps, 1.0, 2.0];
    let m = DMatrix::from_fn(3, 3, |i, j| integrate_pieces(&breaks, a, |x| hats[i](x) * hats[j](x)));
    let dinv_sqrt = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 / m[(i, i)].sqrt() } else { 0.0 });
    let s = &dinv_sqrt * m * &dinv_sqrt;
    let eig = s.symmetric_eigen();
    Ok(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min))
}
