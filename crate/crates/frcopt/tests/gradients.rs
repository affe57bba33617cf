//! Finite-difference verification of every objective and constraint
//! gradient on short-plate and cantilever-style fixtures, at the per-term
//! thresholds (1e-6 pure field terms, 1e-4 ersatz/geometry terms, 1e-2
//! cut-cell level-set terms).

use frcopt::adjoint::{
    adjoint_gradient, evaluate_design, fd_verify, significant_indices, ObjectiveWeights, Term,
};
use frcopt::levelset::TargetField;
use frcopt::mechanics::Backend;
use frcopt::problems::config::{LsInit, ProblemConfig};
use frcopt::problems::presets;
use frcopt::problems::setup::{build_problem, BuiltProblem};

/// Desk short-plate fixture shrunk to a 64x16 state mesh for fast solves.
fn small_short_plate(backend: Backend) -> ProblemConfig {
    let mut cfg = presets::preset("short_plate").unwrap();
    cfg.state_mesh = [64, 16];
    cfg.ls_mesh = [16, 4];
    cfg.fiber_mesh = [16, 4, 1];
    cfg.backend = backend;
    cfg.weights.misalign = 0.05;
    cfg.weights.lcurv = 0.1;
    cfg.weights.gcurv = 0.01;
    cfg
}

/// Cantilever-style fixture with a designable level set; the interface stays
/// away from the loaded boundaries (interior holes plus non-design pads).
fn small_concurrent(backend: Backend) -> ProblemConfig {
    let mut cfg = presets::preset("cantilever2load").unwrap();
    cfg.state_mesh = [32, 16];
    cfg.ls_mesh = [16, 8];
    cfg.fiber_mesh = [16, 8, 1];
    cfg.ls_init = LsInit::Holes { nx: 3, ny: 1, radius: 0.18 };
    cfg.backend = backend;
    cfg
}

struct Fixture {
    built: BuiltProblem,
    x: Vec<f64>,
    target: Option<TargetField>,
    report: frcopt::adjoint::GradientReport,
}

fn prepare(cfg: &ProblemConfig, perturb_fiber: bool) -> Fixture {
    let built = build_problem(cfg).unwrap();
    let mut x = built.x0.clone();
    if perturb_fiber {
        // bend the fiber field so curvature terms are active
        let n_ls = built.setup.layout.ls_free.len();
        for (i, v) in x.iter_mut().enumerate().skip(n_ls) {
            let k = i - n_ls;
            *v += 0.4 * ((k as f64) * 0.7).sin();
        }
    }
    let target = built
        .setup
        .regularizer
        .as_ref()
        .map(|reg| {
            let (ls, _) = built.setup.unpack(&x);
            reg.build_target(&ls, &built.setup.grid).unwrap()
        });
    let evaluated = evaluate_design(&built.setup, &x, target.as_ref()).unwrap();
    let weights = ObjectiveWeights::default();
    let report = adjoint_gradient(&built.setup, &evaluated, &weights, target.as_ref()).unwrap();
    Fixture { built, x, target, report }
}

fn check_term(fixture: &Fixture, term: Term, range: (usize, usize), samples: usize, threshold: f64) {
    let tg = fixture.report.term(term).unwrap_or_else(|| panic!("{} missing", term.name()));
    let idx = significant_indices(&tg.gradient, samples, range.0, range.1);
    assert!(!idx.is_empty(), "{}: no significant components", term.name());
    let setup = &fixture.built.setup;
    let target = fixture.target.as_ref();
    let fd = fd_verify(
        |x| evaluate_design(setup, x, target).unwrap().values.raw[term.index()],
        &tg.gradient,
        &fixture.x,
        &idx,
        1e-6,
    );
    assert!(
        fd.passes(threshold),
        "{}: max rel {:.3e} (median {:.3e}) over {:?}",
        term.name(),
        fd.max_rel,
        fd.median_rel,
        fd.samples
    );
}

#[test]
fn fiber_penalty_gradients_are_exact_fields() {
    let cfg = small_short_plate(Backend::Ersatz);
    let fixture = prepare(&cfg, true);
    let n = fixture.x.len();
    for term in [Term::Misalignment, Term::LocalCurvature, Term::GlobalCurvature] {
        check_term(&fixture, term, (0, n), 5, 1e-6);
    }
}

#[test]
fn strain_energy_fiber_gradient_ersatz() {
    let cfg = small_short_plate(Backend::Ersatz);
    let fixture = prepare(&cfg, true);
    let n = fixture.x.len();
    check_term(&fixture, Term::StrainEnergy, (0, n), 5, 1e-4);
}

#[test]
fn strain_energy_fiber_gradient_cutcell() {
    let cfg = small_short_plate(Backend::CutCell);
    let fixture = prepare(&cfg, true);
    let n = fixture.x.len();
    check_term(&fixture, Term::StrainEnergy, (0, n), 5, 1e-4);
}

#[test]
fn levelset_term_gradients_ersatz() {
    let cfg = small_concurrent(Backend::Ersatz);
    let fixture = prepare(&cfg, false);
    let n_ls = fixture.built.setup.layout.ls_free.len();
    assert!(n_ls > 0);
    // geometry terms act on the level-set block
    check_term(&fixture, Term::Perimeter, (0, n_ls), 5, 1e-4);
    check_term(&fixture, Term::Regularization, (0, n_ls), 5, 1e-4);
    check_term(&fixture, Term::StrainEnergy, (0, n_ls), 4, 1e-4);
}

#[test]
fn volume_constraint_gradient_both_backends() {
    for (backend, threshold) in [(Backend::Ersatz, 1e-4), (Backend::CutCell, 1e-2)] {
        let cfg = small_concurrent(backend);
        let fixture = prepare(&cfg, false);
        let n_ls = fixture.built.setup.layout.ls_free.len();
        let (_, ggrad) = fixture.report.constraint.as_ref().expect("volume constraint present");
        let idx = significant_indices(ggrad, 5, 0, n_ls);
        let setup = &fixture.built.setup;
        let target = fixture.target.as_ref();
        let fraction = setup.volume_fraction_max.unwrap();
        let den = fraction * setup.domain_volume;
        let fd = fd_verify(
            |x| evaluate_design(setup, x, target).unwrap().values.volume / den - 1.0,
            ggrad,
            &fixture.x,
            &idx,
            1e-6,
        );
        assert!(
            fd.passes(threshold),
            "{backend:?} volume: max rel {:.3e} over {:?}",
            fd.max_rel,
            fd.samples
        );
    }
}

#[test]
fn strain_energy_levelset_gradient_cutcell() {
    let cfg = small_concurrent(Backend::CutCell);
    let fixture = prepare(&cfg, false);
    let n_ls = fixture.built.setup.layout.ls_free.len();
    check_term(&fixture, Term::StrainEnergy, (0, n_ls), 4, 1e-2);
}

#[test]
fn gradient_reconstruction_identity() {
    let cfg = small_short_plate(Backend::Ersatz);
    let built = build_problem(&cfg).unwrap();
    let evaluated = evaluate_design(&built.setup, &built.x0, None).unwrap();
    let mut weights = ObjectiveWeights::default();
    weights.set_weight(Term::Misalignment, 0.05);
    weights.set_normalizer(Term::Misalignment, 3.0);
    weights.set_weight(Term::GlobalCurvature, 0.01);
    weights.set_normalizer(Term::StrainEnergy, evaluated.values.raw[0].max(1e-30));
    let report = adjoint_gradient(&built.setup, &evaluated, &weights, None).unwrap();
    let rebuilt = report.reconstruct_total(&weights);
    let scale = report.total.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for (a, b) in report.total.iter().zip(&rebuilt) {
        assert!((a - b).abs() <= 1e-14 * scale, "{a} vs {b}");
    }
}

#[test]
fn pure_shear_stationarity_at_quarter_pi() {
    // exact pure shear: affine Dirichlet u = (g y, 0) on all edges of a
    // full-solid block. At theta = pi/4 the strain energy is stationary with
    // respect to a uniform angle shift; compare the directional derivative
    // there against a clearly non-stationary angle.
    use frcopt::adjoint::{DesignLayout, MaterialModel, ProblemSetup};
    use frcopt::bspline::{ScalarField, TensorBsplineSpace};
    use frcopt::fiber::{FiberField, FiberQuadrature};
    use frcopt::levelset::LevelSetField;
    use frcopt::mechanics::{
        AnalysisGrid, BoundaryEdge, BoundaryRegion, DirichletSpec, DirichletValue, LoadCase,
        MechanicsConfig,
    };
    use std::sync::Arc;

    let directional_at = |angle: f64| -> (f64, f64) {
        let grid = AnalysisGrid::new([0.0, 0.0], [1.0, 1.0], 24, 24).unwrap();
        let ls_space =
            Arc::new(TensorBsplineSpace::new_2d([2, 2], [0.0, 0.0], [1.0, 1.0], [8, 8]).unwrap());
        let ls = LevelSetField::new(ScalarField::constant(ls_space, -1.0), 1.0);
        let fib_space =
            Arc::new(TensorBsplineSpace::new_2d([2, 2], [0.0, 0.0], [1.0, 1.0], [8, 8]).unwrap());
        let fib = FiberField::new_2d(ScalarField::constant(fib_space, angle)).unwrap();
        let shear = DirichletValue::Affine { a: [[0.0, 1e-2], [0.0, 0.0]], b: [0.0, 0.0] };
        let dirichlet: Vec<DirichletSpec> =
            [BoundaryEdge::Left, BoundaryEdge::Right, BoundaryEdge::Bottom, BoundaryEdge::Top]
                .map(|edge| DirichletSpec { region: BoundaryRegion::full(edge, &grid), value: shear })
                .to_vec();
        let layout = DesignLayout::new(&ls, &fib, false, &[]);
        let fiber_quad = FiberQuadrature::new(&fib).unwrap();
        let material = MaterialModel::new(frcopt::homogenization::PhaseProperties {
            e_matrix: 1.03,
            e_fiber: 1.02e3,
            nu_matrix: 0.4,
            nu_fiber: 0.4,
            volume_fraction: 0.1,
            aspect_ratio: 10.0,
        })
        .unwrap();
        let setup = ProblemSetup {
            grid,
            backend: Backend::Ersatz,
            mech_config: MechanicsConfig::default(),
            dirichlet,
            loads: vec![LoadCase { tractions: vec![] }],
            material,
            mechanics_enabled: true,
            kappa_max: 1.0,
            symmetry_planes: Vec::new(),
            volume_fraction_max: None,
            domain_volume: 1.0,
            fiber_quad,
            regularizer: None,
            layout: layout.clone(),
            ls_proto: ls.clone(),
            fib_proto: fib.clone(),
        };
        let x = layout.pack(&ls, &fib);
        let evaluated = evaluate_design(&setup, &x, None).unwrap();
        let report = adjoint_gradient(&setup, &evaluated, &ObjectiveWeights::default(), None).unwrap();
        let tg = report.term(Term::StrainEnergy).unwrap();
        let directional: f64 = tg.gradient.iter().sum();
        let norm: f64 = tg.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
        (directional, norm)
    };

    let (dd_opt, _) = directional_at(std::f64::consts::FRAC_PI_4);
    let (dd_ref, _) = directional_at(std::f64::consts::FRAC_PI_8);
    assert!(
        dd_opt.abs() <= 1e-3 * dd_ref.abs(),
        "stationarity violated: d(pi/4) = {dd_opt:.3e} vs d(pi/8) = {dd_ref:.3e}"
    );
}
