//! Fixtures shared by the benchmarks.

use lodlab_core::{build_hierarchy, make_blocks, ElementCoefficient, MeshHierarchy};

/// Blocks coefficient at contrast `beta` on an `n_coarse / 32 / n_fine`
/// hierarchy.
pub fn blocks(n_coarse: usize, n_fine: usize, beta: f64) -> (MeshHierarchy, ElementCoefficient) {
    let h = build_hierarchy(n_coarse, 32.max(n_coarse), n_fine).expect("nested levels");
    let c = ElementCoefficient::from_raster(&make_blocks(beta).expect("valid contrast"), &h);
    (h, c)
}
