//! Immersed 2D linear-elastic analysis of the level-set-defined solid on a
//! fixed background grid, with an ersatz-material backend and a cut-cell
//! backend (Heaviside enrichment, unsymmetric Nitsche boundary conditions,
//! facet ghost stabilization, elastic bedding of free-floating regions).

pub mod assemble;
pub mod cutcell;
pub mod enrich;
pub mod grid;
pub mod solver;

pub use assemble::{
    heaviside, heaviside_deriv, Backend, DirichletSpec, DirichletValue, ImmersedAnalysis, LoadCase,
    MechanicsConfig, MechanicsError,
};
pub use cutcell::{decompose, CutCellDecomposition, ElementClass};
pub use enrich::{detect_free_floating, enrich, BoundaryEdge, BoundaryRegion, EnrichedDofMap};
pub use grid::AnalysisGrid;
