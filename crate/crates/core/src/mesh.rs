//! Uniform criss-cross triangulations of the unit square, nested hierarchies
//! and coarse patches.
//!
//! Cell `(i, j)` of an `n × n` grid is split along its lower-left to
//! upper-right diagonal into
//!
//! ```text
//! lower: (i,j) (i+1,j) (i+1,j+1)     index 2·(j·n+i)
//! upper: (i,j) (i+1,j+1) (i,j+1)     index 2·(j·n+i)+1
//! ```
//!
//! and vertex `(i, j)` has index `j·(n+1)+i`.

use std::collections::HashMap;

use crate::linalg::{CsrMatrix, TripletBuilder};
use crate::Error;

#[derive(Debug, Clone)]
pub struct Triangulation {
    n: usize,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    // vertex -> incident triangles, flattened
    vt_offsets: Vec<usize>,
    vt_list: Vec<usize>,
}

impl Triangulation {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn vertex_index(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    pub fn vertex_ij(&self, v: usize) -> (usize, usize) {
        (v % (self.n + 1), v / (self.n + 1))
    }

    /// Returns the cell `(i, j)` of a triangle and whether it is the upper one.
    pub fn triangle_cell(&self, t: usize) -> (usize, usize, bool) {
        let c = t / 2;
        (c % self.n, c / self.n, t % 2 == 1)
    }

    pub fn triangle_index(&self, i: usize, j: usize, upper: bool) -> usize {
        2 * (j * self.n + i) + upper as usize
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| !self.boundary[v]).collect()
    }

    pub fn num_interior_vertices(&self) -> usize {
        let m = self.n.saturating_sub(1);
        m * m
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vt_list[self.vt_offsets[v]..self.vt_offsets[v + 1]]
    }

    /// Triangle diameter `√2 / n`.
    pub fn mesh_size(&self) -> f64 {
        std::f64::consts::SQRT_2 / self.n as f64
    }

    /// Area `1 / (2n²)` shared by every triangle.
    pub fn triangle_area(&self) -> f64 {
        0.5 / (self.n * self.n) as f64
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0]
    }

    /// Signed area from coordinates.
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Gradients of the three barycentric coordinates of triangle `t`.
    pub fn barycentric_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
        [
            [(pb[1] - pc[1]) / det, (pc[0] - pb[0]) / det],
            [(pc[1] - pa[1]) / det, (pa[0] - pc[0]) / det],
            [(pa[1] - pb[1]) / det, (pb[0] - pa[0]) / det],
        ]
    }

    /// Checks that every triangle is positively oriented with area `1/(2n²)`,
    /// every edge has one or two triangles, single-triangle edges lie on the
    /// boundary, and the Euler characteristic of the disc holds.
    pub fn check_conformity(&self) -> Result<(), Error> {
        let area = self.triangle_area();
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            let a = self.signed_area(t);
            if (a - area).abs() > 1e-12 * area {
                return Err(Error::NonConforming(format!("triangle {t} has area {a}")));
            }
            for e in 0..3 {
                let (u, v) = (tri[e], tri[(e + 1) % 3]);
                *edges.entry((u.min(v), u.max(v))).or_insert(0) += 1;
            }
        }
        for (&(u, v), &count) in &edges {
            if count > 2 {
                return Err(Error::NonConforming(format!("edge ({u},{v}) shared by {count} triangles")));
            }
            if count == 1 && !self.on_common_side(u, v) {
                return Err(Error::NonConforming(format!("interior edge ({u},{v}) has a single triangle")));
            }
        }
        let euler = self.num_vertices() as i64 - edges.len() as i64 + self.num_triangles() as i64;
        if euler != 1 {
            return Err(Error::NonConforming(format!("Euler characteristic {euler}")));
        }
        Ok(())
    }

    fn on_common_side(&self, u: usize, v: usize) -> bool {
        let (iu, ju) = self.vertex_ij(u);
        let (iv, jv) = self.vertex_ij(v);
        let n = self.n;
        (iu == iv && (iu == 0 || iu == n)) || (ju == jv && (ju == 0 || ju == n))
    }
}

pub fn build_uniform(n: usize) -> Result<Triangulation, Error> {
    if n == 0 {
        return Err(Error::ZeroSubdivision);
    }
    let nv = (n + 1) * (n + 1);
    let mut vertices = Vec::with_capacity(nv);
    let mut boundary = Vec::with_capacity(nv);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            boundary.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    let mut counts = vec![0usize; nv + 1];
    for tri in &triangles {
        for &v in tri {
            counts[v + 1] += 1;
        }
    }
    for v in 0..nv {
        counts[v + 1] += counts[v];
    }
    let mut fill = counts.clone();
    let mut vt_list = vec![0; counts[nv]];
    for (t, tri) in triangles.iter().enumerate() {
        for &v in tri {
            vt_list[fill[v]] = t;
            fill[v] += 1;
        }
    }
    Ok(Triangulation { n, vertices, triangles, boundary, vt_offsets: counts, vt_list })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatchKind {
    Nodal,
    Element,
}

/// A union of coarse triangles, with the fine vertices strictly inside it
/// and off the boundary of the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub kind: PatchKind,
    /// coarse vertex for nodal patches, coarse triangle for element patches
    pub center: usize,
    pub order: usize,
    /// sorted coarse triangle ids
    pub coarse_triangles: Vec<usize>,
    /// sorted fine vertex ids
    pub fine_vertices_interior: Vec<usize>,
}

impl Patch {
    pub fn contains_triangle(&self, t: usize) -> bool {
        self.coarse_triangles.binary_search(&t).is_ok()
    }

    pub fn mask(&self, num_coarse: usize) -> Vec<bool> {
        let mut m = vec![false; num_coarse];
        for &t in &self.coarse_triangles {
            m[t] = true;
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct MeshHierarchy {
    coarse: Triangulation,
    eps_level: Triangulation,
    fine: Triangulation,
    child_map: Vec<Vec<usize>>,
    parent: Vec<usize>,
    eps_parent: Vec<usize>,
    prolongation: CsrMatrix,
}

/// Parent triangle index of a fine triangle under a refinement by `r`.
fn parent_triangle(fine: &Triangulation, coarse_n: usize, r: usize, t: usize) -> usize {
    let (a, b, upper) = fine.triangle_cell(t);
    let (la, lb) = (a % r, b % r);
    let lower = if upper { la > lb } else { la >= lb };
    2 * ((b / r) * coarse_n + a / r) + (!lower) as usize
}

pub fn build_hierarchy(n_coarse: usize, n_eps: usize, n_fine: usize) -> Result<MeshHierarchy, Error> {
    if n_coarse == 0 || n_eps == 0 || n_fine == 0 {
        return Err(Error::ZeroSubdivision);
    }
    if n_eps % n_coarse != 0 {
        return Err(Error::NotNested { coarse: n_coarse, fine: n_eps });
    }
    if n_fine % n_eps != 0 {
        return Err(Error::NotNested { coarse: n_eps, fine: n_fine });
    }
    let coarse = build_uniform(n_coarse)?;
    let eps_level = build_uniform(n_eps)?;
    let fine = build_uniform(n_fine)?;
    let r = n_fine / n_coarse;
    let re = n_fine / n_eps;

    let parent: Vec<usize> = (0..fine.num_triangles()).map(|t| parent_triangle(&fine, n_coarse, r, t)).collect();
    let eps_parent: Vec<usize> = (0..fine.num_triangles()).map(|t| parent_triangle(&fine, n_eps, re, t)).collect();
    let mut child_map = vec![Vec::with_capacity(r * r); coarse.num_triangles()];
    for (t, &p) in parent.iter().enumerate() {
        child_map[p].push(t);
    }

    let mut tb = TripletBuilder::with_capacity(fine.num_vertices(), coarse.num_vertices(), 3 * fine.num_vertices());
    let rf = r as f64;
    for v in 0..fine.num_vertices() {
        let (fi, fj) = fine.vertex_ij(v);
        let ci = (fi / r).min(n_coarse - 1);
        let cj = (fj / r).min(n_coarse - 1);
        let (s, t) = (fi - r * ci, fj - r * cj);
        let entries: [(usize, usize, usize); 3] = if s >= t {
            [(ci, cj, r - s), (ci + 1, cj, s - t), (ci + 1, cj + 1, t)]
        } else {
            [(ci, cj, r - t), (ci + 1, cj + 1, s), (ci, cj + 1, t - s)]
        };
        for (i, j, w) in entries {
            if w > 0 {
                tb.push(v, coarse.vertex_index(i, j), w as f64 / rf);
            }
        }
    }
    let prolongation = tb.build();
    Ok(MeshHierarchy { coarse, eps_level, fine, child_map, parent, eps_parent, prolongation })
}

impl MeshHierarchy {
    pub fn coarse(&self) -> &Triangulation {
        &self.coarse
    }

    pub fn eps_level(&self) -> &Triangulation {
        &self.eps_level
    }

    pub fn fine(&self) -> &Triangulation {
        &self.fine
    }

    /// Fine triangles per coarse triangle edge.
    pub fn ratio(&self) -> usize {
        self.fine.n() / self.coarse.n()
    }

    pub fn children(&self, coarse_t: usize) -> &[usize] {
        &self.child_map[coarse_t]
    }

    pub fn child_map(&self) -> &[Vec<usize>] {
        &self.child_map
    }

    pub fn parent(&self, fine_t: usize) -> usize {
        self.parent[fine_t]
    }

    pub fn parents(&self) -> &[usize] {
        &self.parent
    }

    /// ε-level triangle containing a fine triangle.
    pub fn eps_parent(&self, fine_t: usize) -> usize {
        self.eps_parent[fine_t]
    }

    /// Coarse triangle containing an ε-level triangle.
    pub fn eps_to_coarse(&self, eps_t: usize) -> usize {
        parent_triangle(&self.eps_level, self.coarse.n(), self.eps_level.n() / self.coarse.n(), eps_t)
    }

    /// Fine-vertex × coarse-vertex nodal values of the coarse hats, over all
    /// vertices including the boundary.
    pub fn prolongation(&self) -> &CsrMatrix {
        &self.prolongation
    }

    /// Nodal values on the fine mesh of a coarse function given at all coarse
    /// vertices.
    pub fn prolong(&self, coarse_values: &[f64]) -> Vec<f64> {
        self.prolongation.mul_vec(coarse_values)
    }

    /// Fine vertex at the position of a coarse vertex.
    pub fn coarse_to_fine_vertex(&self, z: usize) -> usize {
        let (i, j) = self.coarse.vertex_ij(z);
        let r = self.ratio();
        self.fine.vertex_index(i * r, j * r)
    }

    fn check_coarse_triangle(&self, t: usize) -> Result<(), Error> {
        if t >= self.coarse.num_triangles() {
            return Err(Error::OutOfRange { what: "coarse triangle", id: t, len: self.coarse.num_triangles() });
        }
        Ok(())
    }

    /// Adds every coarse triangle that shares a vertex with the masked set.
    pub fn grow(&self, mask: &[bool]) -> Vec<bool> {
        let mut touched = vec![false; self.coarse.num_vertices()];
        for (t, &inside) in mask.iter().enumerate() {
            if inside {
                for v in self.coarse.triangle(t) {
                    touched[v] = true;
                }
            }
        }
        let mut out = mask.to_vec();
        for (v, &hit) in touched.iter().enumerate() {
            if hit {
                for &t in self.coarse.vertex_triangles(v) {
                    out[t] = true;
                }
            }
        }
        out
    }

    pub fn nodal_patch(&self, z: usize, k: usize) -> Result<Patch, Error> {
        if z >= self.coarse.num_vertices() {
            return Err(Error::OutOfRange { what: "coarse vertex", id: z, len: self.coarse.num_vertices() });
        }
        if self.coarse.is_boundary(z) {
            return Err(Error::BoundaryVertex(z));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("patch order must be at least 1".into()));
        }
        let mut mask = vec![false; self.coarse.num_triangles()];
        for &t in self.coarse.vertex_triangles(z) {
            mask[t] = true;
        }
        for _ in 1..k {
            mask = self.grow(&mask);
        }
        Ok(self.patch_from_mask(PatchKind::Nodal, z, k, &mask))
    }

    pub fn element_patch(&self, t: usize, k: usize) -> Result<Patch, Error> {
        self.check_coarse_triangle(t)?;
        if k == 0 {
            return Err(Error::InvalidParameter("patch order must be at least 1".into()));
        }
        let mut mask = vec![false; self.coarse.num_triangles()];
        mask[t] = true;
        for _ in 1..k {
            mask = self.grow(&mask);
        }
        Ok(self.patch_from_mask(PatchKind::Element, t, k, &mask))
    }

    /// `T` together with every coarse triangle touching it.
    pub fn element_neighborhood(&self, t: usize) -> Result<Patch, Error> {
        self.element_patch(t, 2)
    }

    pub fn patch_from_mask(&self, kind: PatchKind, center: usize, order: usize, mask: &[bool]) -> Patch {
        let coarse_triangles: Vec<usize> = (0..mask.len()).filter(|&t| mask[t]).collect();
        let fine_vertices_interior = self.fine_interior_vertices(mask);
        Patch { kind, center, order, coarse_triangles, fine_vertices_interior }
    }

    /// Fine vertices off the domain boundary all of whose incident fine
    /// triangles lie in the masked coarse triangles. Sorted.
    pub fn fine_interior_vertices(&self, mask: &[bool]) -> Vec<usize> {
        let mut seen = vec![false; self.fine.num_vertices()];
        let mut out = Vec::new();
        for (ct, &inside) in mask.iter().enumerate() {
            if !inside {
                continue;
            }
            for &ft in &self.child_map[ct] {
                for v in self.fine.triangle(ft) {
                    if seen[v] {
                        continue;
                    }
                    seen[v] = true;
                    if !self.fine.is_boundary(v) && self.fine.vertex_triangles(v).iter().all(|&t| mask[self.parent[t]])
                    {
                        out.push(v);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// All fine triangles inside the masked coarse triangles, sorted.
    pub fn fine_triangles_in(&self, mask: &[bool]) -> Vec<usize> {
        let mut out: Vec<usize> =
            mask.iter().enumerate().filter(|(_, &m)| m).flat_map(|(t, _)| self.child_map[t].iter().copied()).collect();
        out.sort_unstable();
        out
    }

    /// Coarse vertices off the boundary that belong to some masked triangle.
    pub fn coarse_interior_vertices_in(&self, mask: &[bool]) -> Vec<usize> {
        let mut hit = vec![false; self.coarse.num_vertices()];
        for (t, &m) in mask.iter().enumerate() {
            if m {
                for v in self.coarse.triangle(t) {
                    hit[v] = true;
                }
            }
        }
        (0..hit.len()).filter(|&v| hit[v] && !self.coarse.is_boundary(v)).collect()
    }

    /// Smallest order at which every nodal patch covers the domain.
    pub fn saturation_order(&self) -> usize {
        let nt = self.coarse.num_triangles();
        let mut worst = 1;
        for z in self.coarse.interior_vertices() {
            let mut mask = vec![false; nt];
            for &t in self.coarse.vertex_triangles(z) {
                mask[t] = true;
            }
            let mut k = 1;
            while mask.iter().any(|m| !m) {
                mask = self.grow(&mask);
                k += 1;
            }
            worst = worst.max(k);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_meshes_have_expected_counts() {
        let m = build_uniform(1).unwrap();
        assert_eq!((m.num_triangles(), m.num_vertices(), m.interior_vertices().len()), (2, 4, 0));
        let m = build_uniform(2).unwrap();
        assert_eq!((m.num_triangles(), m.num_vertices(), m.interior_vertices().len()), (8, 9, 1));
        assert!(build_uniform(0).is_err());
    }

    #[test]
    fn reference_mesh_size() {
        let m = build_uniform(256).unwrap();
        assert_eq!(m.num_triangles(), 131072);
        assert!((m.mesh_size() - 2f64.powi(-8) * 2f64.sqrt()).abs() < 1e-15);
        m.check_conformity().unwrap();
    }

    #[test]
    fn hierarchy_children_and_errors() {
        let h = build_hierarchy(2, 2, 4).unwrap();
        assert!(h.child_map().iter().all(|c| c.len() == 4));
        match build_hierarchy(4, 6, 12) {
            Err(Error::NotNested { coarse: 4, fine: 6 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn children_lie_inside_parent() {
        let h = build_hierarchy(4, 8, 32).unwrap();
        for (ct, kids) in h.child_map().iter().enumerate() {
            let [a, b, c] = h.coarse().triangle(ct);
            let (pa, pb, pc) = (h.coarse().vertex(a), h.coarse().vertex(b), h.coarse().vertex(c));
            for &ft in kids {
                let x = h.fine().centroid(ft);
                let det = (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]);
                let l1 = ((x[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (x[1] - pa[1])) / det;
                let l2 = ((pb[0] - pa[0]) * (x[1] - pa[1]) - (x[0] - pa[0]) * (pb[1] - pa[1])) / det;
                assert!(l1 > 0.0 && l2 > 0.0 && l1 + l2 < 1.0);
            }
        }
    }

    /// Barycentric evaluation of every coarse hat at every fine vertex.
    #[test]
    fn prolongation_matches_barycentric_oracle() {
        let h = build_hierarchy(4, 8, 32).unwrap();
        let (c, f) = (h.coarse(), h.fine());
        let p = h.prolongation();
        for v in 0..f.num_vertices() {
            let x = f.vertex(v);
            let mut expect = vec![0.0; c.num_vertices()];
            for t in 0..c.num_triangles() {
                let tri = c.triangle(t);
                let g = c.barycentric_gradients(t);
                let p0 = c.vertex(tri[0]);
                let lam: Vec<f64> = (0..3)
                    .map(|k| {
                        let base = if k == 0 { 1.0 } else { 0.0 };
                        base + g[k][0] * (x[0] - p0[0]) + g[k][1] * (x[1] - p0[1])
                    })
                    .collect();
                if lam.iter().all(|&l| l >= -1e-12) {
                    for k in 0..3 {
                        expect[tri[k]] = lam[k].max(0.0);
                    }
                }
            }
            let (cols, _) = p.row(v);
            let (i, j) = f.vertex_ij(v);
            if i % 8 != 0 || j % 8 != 0 {
                assert!(cols.len() <= 3);
            }
            for z in 0..c.num_vertices() {
                assert!((p.get(v, z) - expect[z]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_interior_hat_is_one_at_center() {
        let h = build_hierarchy(2, 4, 8).unwrap();
        let mut e = vec![0.0; 9];
        e[h.coarse().vertex_index(1, 1)] = 1.0;
        let fine = h.prolong(&e);
        assert_eq!(fine[h.fine().vertex_index(4, 4)], 1.0);
    }

    #[test]
    fn nodal_patch_examples() {
        let h = build_hierarchy(2, 2, 4).unwrap();
        assert_eq!(h.nodal_patch(4, 1).unwrap().coarse_triangles.len(), 6);
        assert_eq!(h.nodal_patch(4, 2).unwrap().coarse_triangles.len(), 8);
        let h = build_hierarchy(4, 4, 8).unwrap();
        let z = h.coarse().vertex_index(1, 1);
        assert_eq!(h.nodal_patch(z, 1).unwrap().coarse_triangles.len(), 6);
        for z in h.coarse().interior_vertices() {
            assert_eq!(h.nodal_patch(z, 8).unwrap().coarse_triangles.len(), 32);
        }
        assert!(matches!(h.nodal_patch(0, 1), Err(Error::BoundaryVertex(0))));
    }

    #[test]
    fn element_patch_and_neighborhood() {
        let h = build_hierarchy(4, 4, 8).unwrap();
        let c = h.coarse();
        let t = c.triangle_index(1, 1, false);
        assert_eq!(h.element_patch(t, 1).unwrap().coarse_triangles, vec![t]);
        // oracle: triangles sharing at least one vertex with T
        let verts = c.triangle(t);
        let expect: Vec<usize> =
            (0..c.num_triangles()).filter(|&s| c.triangle(s).iter().any(|v| verts.contains(v))).collect();
        assert_eq!(h.element_patch(t, 2).unwrap().coarse_triangles, expect);
        assert_eq!(h.element_patch(t, 9).unwrap().coarse_triangles.len(), 32);
        let corner = h.element_neighborhood(0).unwrap().coarse_triangles.len();
        assert!(corner < expect.len());
        let h2 = build_hierarchy(2, 2, 4).unwrap();
        for t in 0..8 {
            let vs = h2.coarse().triangle(t);
            let n = (0..8).filter(|&s| h2.coarse().triangle(s).iter().any(|v| vs.contains(v))).count();
            assert_eq!(h2.element_neighborhood(t).unwrap().coarse_triangles.len(), n);
        }
        assert!(h.element_patch(99, 1).is_err());
    }

    #[test]
    fn full_patch_interior_is_all_interior_vertices() {
        let h = build_hierarchy(4, 4, 16).unwrap();
        let p = h.element_patch(0, 9).unwrap();
        assert_eq!(p.fine_vertices_interior, h.fine().interior_vertices());
    }

    proptest! {
        #[test]
        fn conformity_holds(n in 1usize..20) {
            prop_assert!(build_uniform(n).unwrap().check_conformity().is_ok());
        }

        #[test]
        fn prolongation_partition_of_unity(e in 0u32..3, r in 1usize..5) {
            let nc = 1usize << e;
            let h = build_hierarchy(nc, nc, nc * r).unwrap();
            for s in h.prolongation().row_sums() {
                prop_assert!((s - 1.0).abs() < 1e-14);
            }
        }

        #[test]
        fn patches_are_nested(i in 1usize..8, j in 1usize..8, k in 1usize..8) {
            let h = build_hierarchy(8, 8, 16).unwrap();
            let z = h.coarse().vertex_index(i, j);
            let a = h.nodal_patch(z, k).unwrap();
            let b = h.nodal_patch(z, k + 1).unwrap();
            prop_assert!(a.coarse_triangles.iter().all(|t| b.contains_triangle(*t)));
            prop_assert!(a.fine_vertices_interior.iter().all(|v| b.fine_vertices_interior.binary_search(v).is_ok()));
            let full = h.nodal_patch(z, h.saturation_order()).unwrap();
            prop_assert_eq!(full.coarse_triangles.len(), 128);
        }
    }
}
