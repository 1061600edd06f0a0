//! Localized orthogonal decomposition (LOD) for two-dimensional elliptic
//! problems with rough, high-contrast coefficients.
//!
//! The crate is organised bottom-up: [`mesh`] builds nested uniform
//! triangulations, [`coefficient`] holds piecewise-constant coefficients,
//! [`fem`] assembles P1 systems, [`quasi_interp`] materializes the
//! quasi-interpolation operators and [`lod`] computes correctors and coarse
//! solutions.

pub mod coefficient;
pub mod fem;
pub mod linalg;
pub mod lod;
pub mod mesh;
pub mod quasi_interp;

pub use coefficient::{
    classify_quasi_monotone, estimate_poincare, load_raster, make_blocks, make_channels, parse_raster,
    ElementCoefficient, PoincareEstimate, PoincareVariant, QuasiMonoEntry, QuasiMonoType, RasterCoefficient,
    RasterError,
};
pub use fem::{energy_error, relative_energy_error, DofMap, FineFunction, ReferenceSolution, Source};
pub use linalg::{CsrMatrix, LinalgError};
pub use lod::{CoarseBasis, CoarseSolution, Corrector, KPolicy, Localization, LodProblem};
pub use mesh::{build_hierarchy, build_uniform, MeshHierarchy, Patch, PatchKind, Triangulation};
pub use quasi_interp::{InterpolationOperator, OperatorKind};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh subdivision count must be positive")]
    ZeroSubdivision,
    #[error("levels are not nested: {coarse} does not divide {fine}")]
    NotNested { coarse: usize, fine: usize },
    #[error("{what} {id} out of range (have {len})")]
    OutOfRange { what: &'static str, id: usize, len: usize },
    #[error("coarse vertex {0} lies on the domain boundary")]
    BoundaryVertex(usize),
    #[error("non-conforming triangulation: {0}")]
    NonConforming(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-positive coefficient {value} on element {element}")]
    NonPositiveCoefficient { element: usize, value: f64 },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("patch is empty")]
    EmptyPatch,
    #[error("coarse matrix is not positive definite: {0}")]
    IndefiniteCoarse(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
