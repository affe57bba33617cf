//! Problem presets, configuration parsing, the optimization driver and all
//! output writers (VTK, CSV, SVG, checkpoints).

pub mod config;
pub mod presets;
pub mod run;
pub mod schedule;
pub mod setup;
pub mod streamline;
pub mod svg;
pub mod vtk;

pub use config::{ConfigError, ProblemConfig};
pub use run::{run_preset, run_problem, RunError, RunOverrides, RunResult};
