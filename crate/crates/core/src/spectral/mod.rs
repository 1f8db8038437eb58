//! Conforming P1 finite elements on triangle meshes.
//!
//! The chain is: constrained Delaunay meshing with quality refinement
//! ([`triangulate`]), symmetric ring meshes assembled from one meshed quarter
//! ([`symmetric_ring_mesh`]), stiffness/mass assembly, and a shift-invert
//! subspace eigensolver for the generalized problem `K v = lambda M v` with
//! optional Dirichlet elimination. Post-processing extracts level curves,
//! per-triangle gradients and extremum reports.

mod assemble;
mod eigen;
mod mesh;
mod post;
mod sparse;

pub use assemble::{assemble_mass, assemble_stiffness, dirichlet_mask};
pub use eigen::{solve_generalized, EigenOpts, EigenPair};
pub use mesh::{
    import_mesh, symmetric_ring_mesh, triangulate, BoundaryEdge, Mesh, MeshError, MeshOptions,
    TriLocator,
};
pub use post::{
    eigenfunction_csv, extrema_report, gradient_field, level_curve, mesh_svg, mixed_ground_state,
    second_neumann, ExtremaReport, LevelCurve, SpectralReport,
};
pub use sparse::Csr;

#[cfg(test)]
mod tests;
