//! Numerical study of a planar tube domain with one hole whose second Neumann
//! eigenfunction attains its extrema in the interior.
//!
//! The crate is organized as a pipeline:
//!
//! * [`geometry`] — exact construction of the domain family `D(eps, eps0)`
//!   (a widening/narrowing horn joined to annular arc tubes, reflected into a
//!   closed ring with a single hole), point classification, nearest-boundary
//!   projection, and geodesic distance to the short Dirichlet cross-cut.
//! * [`spectral`] — conforming P1 finite elements: constrained Delaunay
//!   meshing, stiffness/mass assembly, a shift-invert subspace eigensolver,
//!   level-curve extraction and extremum reports.
//! * [`rbm`] — reflected Brownian motion via Euler steps with nearest-point
//!   projection, driven by a counter-based RNG so every path is reproducible
//!   in isolation.
//! * [`coupling`] — synchronous and mirror couplings of two reflected paths,
//!   a half-plane skew-product construction, and the staged coupling protocol
//!   that tracks which paths reach the dividing curve first.
//! * [`experiments`] — study drivers that tie the above together and emit
//!   JSON/CSV/SVG reports with explicit pass/fail verdicts.

pub mod coupling;
pub mod experiments;
pub mod geometry;
pub mod rbm;
pub mod spectral;
pub mod stats;
pub mod svg;

pub use geometry::{build_domain, build_quarter, DomainParams, DomainSpec, P2};
pub use spectral::{EigenPair, LevelCurve, Mesh};
pub use rbm::{PathState, SimConfig};
pub use coupling::{CouplingRecord, MirrorState, StageSchedule};
pub use experiments::{StudyConfig, StudyReport};
