//! Builds the evaluation-ready problem setup (spaces, fields, quadratures,
//! boundary conditions, design layout) from a configuration.

use std::sync::Arc;

use thiserror::Error;

use super::config::{Disc, EdgeName, FiberInit, LoadConfig, LsInit, ProblemConfig};
use crate::adjoint::{DesignLayout, MaterialModel, ObjectiveWeights, ProblemSetup, Term};
use crate::bspline::{Point, ScalarField, SplineError, TensorBsplineSpace};
use crate::fiber::{FiberError, FiberField, FiberQuadrature};
use crate::homogenization::MaterialError;
use crate::levelset::{GeometryError, LevelSetField, LevelSetRegularizer};
use crate::mechanics::grid::GridError;
use crate::mechanics::{
    AnalysisGrid, BoundaryEdge, BoundaryRegion, DirichletSpec, DirichletValue, LoadCase,
    MechanicsConfig,
};

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn to_edge(e: EdgeName) -> BoundaryEdge {
    match e {
        EdgeName::Left => BoundaryEdge::Left,
        EdgeName::Right => BoundaryEdge::Right,
        EdgeName::Bottom => BoundaryEdge::Bottom,
        EdgeName::Top => BoundaryEdge::Top,
    }
}

fn inside_disc(discs: &[Disc], x: &Point) -> bool {
    discs.iter().any(|d| {
        let dx = x[0] - d.center[0];
        let dy = x[1] - d.center[1];
        dx * dx + dy * dy <= d.radius * d.radius
    })
}

/// Initial level-set values before clamping: negative solid, holes positive.
fn initial_phi(cfg: &ProblemConfig, x: &Point) -> f64 {
    match cfg.ls_init {
        LsInit::Solid => -cfg.phi_bnd,
        LsInit::Holes { nx, ny, radius } => {
            let w = cfg.domain_hi[0] - cfg.domain_lo[0];
            let h = cfg.domain_hi[1] - cfg.domain_lo[1];
            let mut best = f64::NEG_INFINITY;
            for i in 0..nx {
                for j in 0..ny {
                    let cx = cfg.domain_lo[0] + (i as f64 + 1.0) * w / (nx as f64 + 1.0);
                    let cy = cfg.domain_lo[1] + (j as f64 + 1.0) * h / (ny as f64 + 1.0);
                    let d = ((x[0] - cx).powi(2) + (x[1] - cy).powi(2)).sqrt();
                    best = best.max(radius - d);
                }
            }
            best.clamp(-cfg.phi_bnd, cfg.phi_bnd)
        }
    }
}

/// Evaluation-ready setup plus the initial design vector and base weights.
pub struct BuiltProblem {
    pub setup: ProblemSetup,
    pub x0: Vec<f64>,
    pub bounds: (Vec<f64>, Vec<f64>),
    pub initial_weights: ObjectiveWeights,
}

pub fn build_problem(cfg: &ProblemConfig) -> Result<BuiltProblem, SetupError> {
    let dim = cfg.dim;
    // grid (dummy for fields-only problems, which never touch it)
    let grid = if dim == 2 && cfg.mechanics_enabled {
        AnalysisGrid::new(
            [cfg.domain_lo[0], cfg.domain_lo[1]],
            [cfg.domain_hi[0], cfg.domain_hi[1]],
            cfg.state_mesh[0],
            cfg.state_mesh[1],
        )?
    } else {
        AnalysisGrid::new([0.0, 0.0], [1.0, 1.0], 1, 1)?
    };

    // level-set field
    let (ls, ls_frozen) = if dim == 2 {
        let space = Arc::new(TensorBsplineSpace::new_2d(
            [cfg.ls_degree, cfg.ls_degree],
            [cfg.domain_lo[0], cfg.domain_lo[1]],
            [cfg.domain_hi[0], cfg.domain_hi[1]],
            [cfg.ls_mesh[0], cfg.ls_mesh[1]],
        )?);
        let mut field = ScalarField::from_fn_greville(space.clone(), |x| initial_phi(cfg, x));
        // clamp non-design (always solid) coefficients and freeze them
        let mut frozen = vec![false; space.num_basis()];
        if !cfg.non_design.is_empty() {
            for k in 0..space.num_basis() {
                let (lo, hi) = space.support_box(k);
                let overlaps = cfg.non_design.iter().any(|d| {
                    let cx = d.center[0].clamp(lo[0], hi[0]);
                    let cy = d.center[1].clamp(lo[1], hi[1]);
                    let dx = cx - d.center[0];
                    let dy = cy - d.center[1];
                    dx * dx + dy * dy <= d.radius * d.radius
                });
                if overlaps {
                    field.coeffs_mut()[k] = -cfg.phi_bnd;
                    frozen[k] = true;
                }
            }
        }
        (LevelSetField::new(field, cfg.phi_bnd), frozen)
    } else {
        let space = Arc::new(TensorBsplineSpace::new_2d([1, 1], [0.0, 0.0], [1.0, 1.0], [1, 1])?);
        (LevelSetField::new(ScalarField::constant(space, -1.0), 1.0), vec![false; 4])
    };

    // fiber field(s)
    let fiber_space = Arc::new(TensorBsplineSpace::new(
        dim,
        &vec![cfg.fiber_degree; dim],
        &cfg.domain_lo[..dim],
        &cfg.domain_hi[..dim],
        &cfg.fiber_mesh[..dim],
    )?);
    let make_field = |space: &Arc<TensorBsplineSpace>| -> Result<ScalarField, SplineError> {
        match cfg.fiber_init {
            FiberInit::Constant(a) => Ok(ScalarField::constant(space.clone(), a)),
            FiberInit::SinSin => ScalarField::interpolate_greville(space.clone(), |x| {
                (0..dim).map(|d| (std::f64::consts::PI * x[d]).sin()).product()
            }),
        }
    };
    let theta_xy = make_field(&fiber_space)?;
    let fib = if cfg.fiber_theta_z {
        FiberField::new_3d(theta_xy, make_field(&fiber_space)?)?
    } else if dim == 3 {
        // one designable in-plane angle on a 3D field
        FiberField::new_3d(theta_xy, ScalarField::constant(fiber_space.clone(), 0.0))?
    } else {
        FiberField::new_2d(theta_xy)?
    };

    let layout = DesignLayout::new(&ls, &fib, cfg.ls_designable, &ls_frozen);
    let fiber_quad = FiberQuadrature::new(&fib)?;
    let material = MaterialModel::new(cfg.material)?;

    let regularizer = if cfg.ls_designable && cfg.weights.regularization > 0.0 {
        let discs = cfg.non_design.clone();
        let mask = move |x: &Point| !inside_disc(&discs, x);
        Some(LevelSetRegularizer::new(ls.space(), &grid, Some(&mask))?)
    } else {
        None
    };

    let dirichlet: Vec<DirichletSpec> = cfg
        .dirichlet
        .iter()
        .map(|d| DirichletSpec {
            region: BoundaryRegion { edge: to_edge(d.edge), range: d.range },
            value: DirichletValue::ZERO,
        })
        .collect();
    let loads: Vec<LoadCase> = cfg
        .loads
        .iter()
        .map(|case| LoadCase {
            tractions: case
                .iter()
                .map(|l: &LoadConfig| {
                    (BoundaryRegion { edge: to_edge(l.edge), range: l.range }, l.traction)
                })
                .collect(),
        })
        .collect();

    let domain_volume: f64 = (0..dim.min(2)).map(|d| cfg.domain_hi[d] - cfg.domain_lo[d]).product();

    let x0 = layout.pack(&ls, &fib);
    let bounds = layout.bounds(cfg.phi_bnd, fib.bounds);

    let mut initial_weights = ObjectiveWeights::default();
    initial_weights.set_weight(Term::StrainEnergy, if cfg.mechanics_enabled { cfg.weights.strain } else { 0.0 });
    initial_weights.set_weight(Term::Perimeter, if cfg.ls_designable { cfg.weights.perimeter } else { 0.0 });
    initial_weights
        .set_weight(Term::Regularization, if regularizer.is_some() { cfg.weights.regularization } else { 0.0 });
    // fiber penalty weights start at zero; the continuation schedule raises
    // them at the activation iteration

    let setup = ProblemSetup {
        grid,
        backend: cfg.backend,
        mech_config: MechanicsConfig {
            c_dirichlet: cfg.c_dirichlet,
            gamma_ghost: cfg.gamma_ghost,
            epsilon_void: cfg.epsilon_void,
            bedding: true,
        },
        dirichlet,
        loads,
        material,
        mechanics_enabled: cfg.mechanics_enabled,
        kappa_max: cfg.kappa_max,
        symmetry_planes: Vec::new(),
        volume_fraction_max: if cfg.ls_designable { cfg.volume_fraction } else { None },
        domain_volume,
        fiber_quad,
        regularizer,
        layout,
        ls_proto: ls,
        fib_proto: fib,
    };
    Ok(BuiltProblem { setup, x0, bounds, initial_weights })
}
