//! P1 assembly with piecewise-constant coefficients, Dirichlet elimination,
//! reference solves and energy norms.

use std::path::Path;

use crate::coefficient::{parse_raster, Raster, RasterError};
use crate::linalg::{dot, solve_spd, CsrMatrix, TripletBuilder, DEFAULT_TOL};
use crate::mesh::{MeshHierarchy, Triangulation};
use crate::Error;

/// Marker for vertices without a degree of freedom.
pub const NO_DOF: usize = usize::MAX;

/// Nodal values at the interior fine vertices, zero on the boundary.
pub type FineFunction = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Form {
    /// `∫ a ∇λ_i · ∇λ_j`
    Stiffness,
    /// `∫ a λ_i λ_j`
    Mass,
}

pub fn element_matrix(mesh: &Triangulation, t: usize, form: Form) -> [[f64; 3]; 3] {
    let area = mesh.triangle_area();
    let mut e = [[0.0; 3]; 3];
    match form {
        Form::Stiffness => {
            let g = mesh.barycentric_gradients(t);
            for i in 0..3 {
                for j in 0..3 {
                    e[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                }
            }
        }
        Form::Mass => {
            for (i, row) in e.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if i == j { area / 6.0 } else { area / 12.0 };
                }
            }
        }
    }
    e
}

/// Assembles `form` over `triangles` with per-triangle weights, keeping only
/// vertices with a local index.
pub fn assemble_local(
    mesh: &Triangulation,
    triangles: &[usize],
    weights: &[f64],
    local: &[usize],
    n: usize,
    form: Form,
) -> CsrMatrix {
    let mut tb = TripletBuilder::with_capacity(n, n, 9 * triangles.len());
    for &t in triangles {
        let e = element_matrix(mesh, t, form);
        let tri = mesh.triangle(t);
        let w = weights[t];
        for a in 0..3 {
            let ia = local[tri[a]];
            if ia == NO_DOF {
                continue;
            }
            for b in 0..3 {
                let ib = local[tri[b]];
                if ib != NO_DOF {
                    tb.push(ia, ib, w * e[a][b]);
                }
            }
        }
    }
    tb.build()
}

/// Interior-vertex numbering of a triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    vertex_to_dof: Vec<usize>,
    dof_to_vertex: Vec<usize>,
}

impl DofMap {
    pub fn interior(mesh: &Triangulation) -> Self {
        let dof_to_vertex = mesh.interior_vertices();
        let mut vertex_to_dof = vec![NO_DOF; mesh.num_vertices()];
        for (d, &v) in dof_to_vertex.iter().enumerate() {
            vertex_to_dof[v] = d;
        }
        Self { vertex_to_dof, dof_to_vertex }
    }

    /// Every vertex is a dof (Neumann numbering).
    pub fn all(mesh: &Triangulation) -> Self {
        let n = mesh.num_vertices();
        Self { vertex_to_dof: (0..n).collect(), dof_to_vertex: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.dof_to_vertex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_to_vertex.is_empty()
    }

    /// `NO_DOF` for eliminated vertices.
    pub fn dof(&self, vertex: usize) -> usize {
        self.vertex_to_dof[vertex]
    }

    pub fn vertex(&self, dof: usize) -> usize {
        self.dof_to_vertex[dof]
    }

    pub fn vertex_to_dof(&self) -> &[usize] {
        &self.vertex_to_dof
    }

    pub fn dof_to_vertex(&self) -> &[usize] {
        &self.dof_to_vertex
    }

    /// Values at all vertices, zero where there is no dof.
    pub fn extend(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.vertex_to_dof.len()];
        for (d, &v) in self.dof_to_vertex.iter().enumerate() {
            out[v] = values[d];
        }
        out
    }

    pub fn restrict(&self, vertex_values: &[f64]) -> Vec<f64> {
        self.dof_to_vertex.iter().map(|&v| vertex_values[v]).collect()
    }
}

fn check_weights(mesh: &Triangulation, a: &[f64]) -> Result<(), Error> {
    if a.len() != mesh.num_triangles() {
        return Err(Error::LengthMismatch { expected: mesh.num_triangles(), found: a.len() });
    }
    if let Some((element, &value)) = a.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveCoefficient { element, value });
    }
    Ok(())
}

fn assemble_with(mesh: &Triangulation, a: &[f64], dofs: &DofMap, form: Form) -> Result<CsrMatrix, Error> {
    check_weights(mesh, a)?;
    let all: Vec<usize> = (0..mesh.num_triangles()).collect();
    Ok(assemble_local(mesh, &all, a, dofs.vertex_to_dof(), dofs.len(), form))
}

/// Stiffness `∫ a ∇λ_i · ∇λ_j` on the given dofs.
pub fn assemble_stiffness(mesh: &Triangulation, a: &[f64], dofs: &DofMap) -> Result<CsrMatrix, Error> {
    assemble_with(mesh, a, dofs, Form::Stiffness)
}

/// Mass `∫ a λ_i λ_j` on the given dofs.
pub fn assemble_weighted_mass(mesh: &Triangulation, a: &[f64], dofs: &DofMap) -> Result<CsrMatrix, Error> {
    assemble_with(mesh, a, dofs, Form::Mass)
}

/// `∫ g λ_i` for `g` constant on each triangle.
pub fn assemble_load(mesh: &Triangulation, g: &[f64], dofs: &DofMap) -> Result<Vec<f64>, Error> {
    if g.len() != mesh.num_triangles() {
        return Err(Error::LengthMismatch { expected: mesh.num_triangles(), found: g.len() });
    }
    let third = mesh.triangle_area() / 3.0;
    let mut f = vec![0.0; dofs.len()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if g[t] == 0.0 {
            continue;
        }
        for &v in tri {
            let d = dofs.dof(v);
            if d != NO_DOF {
                f[d] += g[t] * third;
            }
        }
    }
    Ok(f)
}

/// Right-hand side of the model problem.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// 0 for `x₁ < 1/2`, 1 otherwise
    HalfStep,
    /// 8 on `[0, 1/4]² ∪ [3/4, 1]²`, 0 otherwise
    SpeCorners,
    Raster(Raster),
}

impl Source {
    /// A built-in name or the path of a RASTER file.
    pub fn from_spec(spec: &str) -> Result<Self, RasterError> {
        match spec {
            "half-step" => Ok(Source::HalfStep),
            "spe-corners" => Ok(Source::SpeCorners),
            path => Raster::load(Path::new(path)).map(Source::Raster),
        }
    }

    pub fn from_text(text: &str) -> Result<Self, RasterError> {
        parse_raster(text).map(Source::Raster)
    }

    pub fn name(&self) -> String {
        match self {
            Source::HalfStep => "half-step".into(),
            Source::SpeCorners => "spe-corners".into(),
            Source::Raster(r) => format!("raster{}x{}", r.nx, r.ny),
        }
    }

    pub fn raster(&self) -> Raster {
        match self {
            Source::HalfStep => Raster::new(2, 1, vec![0.0, 1.0]),
            Source::SpeCorners => {
                let mut r = Raster::constant(4, 4, 0.0);
                r.values[0] = 8.0;
                r.values[15] = 8.0;
                r
            }
            Source::Raster(r) => r.clone(),
        }
    }

    /// Value per triangle, sampled at centroids.
    pub fn per_triangle(&self, mesh: &Triangulation) -> Vec<f64> {
        let r = self.raster();
        (0..mesh.num_triangles()).map(|t| r.at(mesh.centroid(t))).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub dofs: DofMap,
    pub stiffness: CsrMatrix,
    pub load: Vec<f64>,
    pub u: FineFunction,
    /// `‖A^{1/2} ∇u_h‖`
    pub energy: f64,
}

/// Fine-scale Galerkin solution on the interior fine dofs.
pub fn solve_reference(hier: &MeshHierarchy, a: &[f64], g: &Source) -> Result<ReferenceSolution, Error> {
    let fine = hier.fine();
    let dofs = DofMap::interior(fine);
    let stiffness = assemble_stiffness(fine, a, &dofs)?;
    let load = assemble_load(fine, &g.per_triangle(fine), &dofs)?;
    let u = solve_spd(&stiffness, &load, DEFAULT_TOL)?;
    let energy = dot(&u, &stiffness.mul_vec(&u)).max(0.0).sqrt();
    Ok(ReferenceSolution { dofs, stiffness, load, u, energy })
}

/// `√((u − v)ᵀ K (u − v))`
pub fn energy_error(u: &[f64], v: &[f64], k: &CsrMatrix) -> Result<f64, Error> {
    if u.len() != k.nrows() {
        return Err(Error::LengthMismatch { expected: k.nrows(), found: u.len() });
    }
    if v.len() != u.len() {
        return Err(Error::LengthMismatch { expected: u.len(), found: v.len() });
    }
    let e: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
    Ok(dot(&e, &k.mul_vec(&e)).max(0.0).sqrt())
}

/// Energy error relative to `‖u‖_K`; 0 when both vanish.
pub fn relative_energy_error(u: &[f64], v: &[f64], k: &CsrMatrix) -> Result<f64, Error> {
    let num = energy_error(u, v, k)?;
    let den = dot(u, &k.mul_vec(u)).max(0.0).sqrt();
    Ok(if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    })
}
