//! Concurrent level-set topology and fiber orientation optimization for
//! fiber-reinforced composite structures.
//!
//! The crate combines:
//!
//! - uniform tensor-product B-spline design fields ([`bspline`]),
//! - a level-set geometry description with interface extraction, signed
//!   distances and regularization penalties ([`levelset`]),
//! - spatially varying fiber orientation fields with misalignment and
//!   curvature manufacturability penalties ([`fiber`]),
//! - Mori-Tanaka homogenization of the composite stiffness ([`homogenization`]),
//! - immersed 2D linear elasticity on a fixed background grid with an ersatz
//!   material backend and a cut-cell backend with Heaviside enrichment,
//!   Nitsche boundary conditions and ghost stabilization ([`mechanics`]),
//! - adjoint design sensitivities ([`adjoint`]),
//! - a GCMMA optimization driver with continuation schedules ([`gcmma`]),
//! - problem presets, config parsing, streamline tracing and VTK/CSV/SVG
//!   writers ([`problems`]).
//!
//! Entry points for typical use are [`problems::presets`] together with
//! [`problems::run::run_problem`], or the `frcopt` binary. Each major
//! capability also has a runnable example under `examples/`.

pub mod adjoint;
pub mod bspline;
pub mod fiber;
pub mod gcmma;
pub mod homogenization;
pub mod levelset;
pub mod mechanics;
pub mod problems;
pub mod quadrature;
