//! Composite objective assembly, volume constraint, adjoint solves and total
//! design gradients over the concatenated design vector (level-set
//! coefficients first, then `theta_xy`, then `theta_z`), plus the
//! finite-difference verification harness.
//!
//! The state problem uses the unsymmetric Nitsche formulation, so the adjoint
//! systems solve the transposed matrix (one factorization serves both). The
//! regularization target field and the term normalizers are frozen per outer
//! iterate and treated as constants during differentiation.

use thiserror::Error;

use crate::fiber::{FiberError, FiberField, FiberQuadrature, SymmetryPlane};
use crate::homogenization::{MaterialError, PhaseProperties, PlaneRotatedStiffness};
use crate::levelset::{
    extract_interface, perimeter_penalty, GeometryError, LevelSetField, LevelSetRegularizer,
    TargetField,
};
use crate::mechanics::assemble::{
    displacement_matrix_pub, strain_from_dofs, strain_matrix, Solution,
};
use crate::mechanics::cutcell::polygons_for_values;
use crate::mechanics::grid::AnalysisGrid;
use crate::mechanics::solver::SolverError;
use crate::mechanics::{
    Backend, DirichletSpec, ImmersedAnalysis, LoadCase, MechanicsConfig, MechanicsError,
};
use nalgebra::{Matrix3, SMatrix, Vector2};

#[derive(Debug, Error)]
pub enum AdjointError {
    #[error("strain-energy term failed: {0}")]
    Mechanics(#[from] MechanicsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spline(#[from] crate::bspline::SplineError),
    #[error(transparent)]
    Fiber(#[from] FiberError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Objective term identifiers, in evaluation and report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    StrainEnergy,
    Perimeter,
    Regularization,
    Misalignment,
    LocalCurvature,
    GlobalCurvature,
    Symmetry,
}

pub const TERMS: [Term; 7] = [
    Term::StrainEnergy,
    Term::Perimeter,
    Term::Regularization,
    Term::Misalignment,
    Term::LocalCurvature,
    Term::GlobalCurvature,
    Term::Symmetry,
];

impl Term {
    pub fn name(&self) -> &'static str {
        match self {
            Term::StrainEnergy => "strain_energy",
            Term::Perimeter => "perimeter",
            Term::Regularization => "regularization",
            Term::Misalignment => "misalignment",
            Term::LocalCurvature => "local_curvature",
            Term::GlobalCurvature => "global_curvature",
            Term::Symmetry => "symmetry",
        }
    }

    pub fn index(&self) -> usize {
        TERMS.iter().position(|t| t == self).unwrap()
    }
}

/// Weights and frozen normalization denominators of the composite objective.
#[derive(Debug, Clone)]
pub struct ObjectiveWeights {
    pub weights: [f64; 7],
    pub normalizers: [f64; 7],
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self { weights: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], normalizers: [1.0; 7] }
    }
}

impl ObjectiveWeights {
    pub fn weight(&self, t: Term) -> f64 {
        self.weights[t.index()]
    }

    pub fn set_weight(&mut self, t: Term, w: f64) {
        self.weights[t.index()] = w;
    }

    pub fn normalizer(&self, t: Term) -> f64 {
        self.normalizers[t.index()]
    }

    pub fn set_normalizer(&mut self, t: Term, n: f64) {
        assert!(n > 0.0, "normalizer must be positive");
        self.normalizers[t.index()] = n;
    }

    /// Composite objective from raw term values.
    pub fn combine(&self, raw: &[f64; 7]) -> f64 {
        let mut z = 0.0;
        for i in 0..7 {
            if self.weights[i] != 0.0 {
                z += self.weights[i] * raw[i] / self.normalizers[i];
            }
        }
        z
    }
}

/// Packing of the design fields into one bounded vector: designable level-set
/// coefficients first, then `theta_xy`, then `theta_z`.
#[derive(Debug, Clone)]
pub struct DesignLayout {
    /// indices of designable level-set coefficients (non-design coefficients
    /// stay clamped in the prototype field)
    pub ls_free: Vec<usize>,
    pub ls_designable: bool,
    pub n_xy: usize,
    pub n_z: usize,
}

impl DesignLayout {
    pub fn new(ls: &LevelSetField, fib: &FiberField, ls_designable: bool, ls_frozen: &[bool]) -> Self {
        let ls_free = if ls_designable {
            (0..ls.field.coeffs().len())
                .filter(|&k| !ls_frozen.get(k).copied().unwrap_or(false))
                .collect()
        } else {
            Vec::new()
        };
        Self {
            ls_free,
            ls_designable,
            n_xy: fib.theta_xy.coeffs().len(),
            n_z: fib.theta_z.as_ref().map_or(0, |f| f.coeffs().len()),
        }
    }

    pub fn len(&self) -> usize {
        self.ls_free.len() + self.n_xy + self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pack(&self, ls: &LevelSetField, fib: &FiberField) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        for &k in &self.ls_free {
            x.push(ls.field.coeffs()[k]);
        }
        x.extend_from_slice(fib.theta_xy.coeffs());
        if let Some(z) = &fib.theta_z {
            x.extend_from_slice(z.coeffs());
        }
        x
    }

    pub fn unpack(&self, x: &[f64], ls: &mut LevelSetField, fib: &mut FiberField) {
        debug_assert_eq!(x.len(), self.len());
        let mut i = 0;
        for &k in &self.ls_free {
            ls.field.coeffs_mut()[k] = x[i];
            i += 1;
        }
        fib.theta_xy.coeffs_mut()[..self.n_xy].copy_from_slice(&x[i..i + self.n_xy]);
        i += self.n_xy;
        if let Some(z) = fib.theta_z.as_mut() {
            z.coeffs_mut()[..self.n_z].copy_from_slice(&x[i..i + self.n_z]);
        }
    }

    /// Box constraints per design variable.
    pub fn bounds(&self, phi_bnd: f64, fiber_bounds: (f64, f64)) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(self.len());
        let mut hi = Vec::with_capacity(self.len());
        for _ in &self.ls_free {
            lo.push(-phi_bnd);
            hi.push(phi_bnd);
        }
        for _ in 0..self.n_xy + self.n_z {
            lo.push(fiber_bounds.0);
            hi.push(fiber_bounds.1);
        }
        (lo, hi)
    }

    /// Scatters a level-set coefficient gradient into the design vector.
    pub fn add_ls_gradient(&self, g_ls: &[f64], out: &mut [f64]) {
        for (i, &k) in self.ls_free.iter().enumerate() {
            out[i] += g_ls[k];
        }
    }

    /// Scatters fiber coefficient gradients into the design vector.
    pub fn add_fiber_gradient(&self, g_xy: &[f64], g_z: Option<&[f64]>, out: &mut [f64]) {
        let off = self.ls_free.len();
        for (i, &g) in g_xy.iter().enumerate() {
            out[off + i] += g;
        }
        if let Some(gz) = g_z {
            let off = off + self.n_xy;
            for (i, &g) in gz.iter().enumerate() {
                out[off + i] += g;
            }
        }
    }
}

/// Composite material data shared across evaluations.
#[derive(Debug, Clone)]
pub struct MaterialModel {
    pub props: PhaseProperties,
    pub plane: PlaneRotatedStiffness,
    pub e_eff: f64,
}

impl MaterialModel {
    pub fn new(props: PhaseProperties) -> Result<Self, MaterialError> {
        let c_local = crate::homogenization::mori_tanaka(&props)?;
        let plane = PlaneRotatedStiffness::new(&c_local)?;
        let e_eff = crate::homogenization::effective_young_modulus(&c_local);
        Ok(Self { props, plane, e_eff })
    }
}

/// Fixed problem data: grid, boundary conditions, material, penalty
/// quadratures and the design layout. Built once per problem.
pub struct ProblemSetup {
    pub grid: AnalysisGrid,
    pub backend: Backend,
    pub mech_config: MechanicsConfig,
    pub dirichlet: Vec<DirichletSpec>,
    pub loads: Vec<LoadCase>,
    pub material: MaterialModel,
    pub mechanics_enabled: bool,
    pub kappa_max: f64,
    pub symmetry_planes: Vec<SymmetryPlane>,
    /// volume constraint `V <= fraction * V0` (None: unconstrained)
    pub volume_fraction_max: Option<f64>,
    pub domain_volume: f64,
    pub fiber_quad: FiberQuadrature,
    pub regularizer: Option<LevelSetRegularizer>,
    pub layout: DesignLayout,
    pub ls_proto: LevelSetField,
    pub fib_proto: FiberField,
}

impl ProblemSetup {
    pub fn unpack(&self, design: &[f64]) -> (LevelSetField, FiberField) {
        let mut ls = self.ls_proto.clone();
        let mut fib = self.fib_proto.clone();
        self.layout.unpack(design, &mut ls, &mut fib);
        (ls, fib)
    }

    pub fn num_constraints(&self) -> usize {
        usize::from(self.volume_fraction_max.is_some() && self.layout.ls_designable)
    }
}

/// All raw (unnormalized) objective term values plus reporting extras.
#[derive(Debug, Clone, Default)]
pub struct TermValues {
    pub raw: [f64; 7],
    pub volume: f64,
    pub max_kappa: f64,
    pub energies: Vec<f64>,
}

/// A fully evaluated design: fields, analysis state and raw term values.
pub struct EvaluatedDesign {
    pub ls: LevelSetField,
    pub fib: FiberField,
    pub analysis: Option<ImmersedAnalysis>,
    pub solution: Option<Solution>,
    pub values: TermValues,
}

fn stiffness_closure<'a>(
    material: &'a MaterialModel,
    fib: &'a FiberField,
) -> impl Fn(&[f64; 2]) -> Matrix3<f64> + Sync + 'a {
    move |x: &[f64; 2]| {
        let theta = fib.theta_xy.value(&[x[0], x[1], 0.0]).unwrap_or(0.0);
        material.plane.at(theta)
    }
}

/// Evaluates every active objective term at a design. `target` is the frozen
/// regularization target for the current outer iterate.
pub fn evaluate_design(
    setup: &ProblemSetup,
    design: &[f64],
    target: Option<&TargetField>,
) -> Result<EvaluatedDesign, AdjointError> {
    let (ls, fib) = setup.unpack(design);
    let mut values = TermValues { energies: Vec::new(), ..Default::default() };

    let (analysis, solution) = if setup.mechanics_enabled {
        let analysis = ImmersedAnalysis::new(
            setup.backend,
            setup.grid.clone(),
            &ls,
            setup.mech_config,
            setup.dirichlet.clone(),
        )?;
        let stiffness = stiffness_closure(&setup.material, &fib);
        let (avg, energies, sol) =
            analysis.multiload_average(&stiffness, setup.material.e_eff, &setup.loads)?;
        values.raw[Term::StrainEnergy.index()] = avg;
        values.energies = energies;
        values.volume = analysis.solid_volume();
        (Some(analysis), Some(sol))
    } else {
        (None, None)
    };

    if setup.layout.ls_designable {
        let interface = extract_interface(&ls, &setup.grid)?;
        let (perim, _) = perimeter_penalty(&ls, &setup.grid, &interface)?;
        values.raw[Term::Perimeter.index()] = perim;
        if let (Some(reg), Some(t)) = (&setup.regularizer, target) {
            let (v, _) = reg.penalty(&ls, t);
            values.raw[Term::Regularization.index()] = v;
        }
    }

    values.raw[Term::Misalignment.index()] = setup.fiber_quad.misalignment(&fib).value;
    values.raw[Term::LocalCurvature.index()] =
        setup.fiber_quad.local_curvature(&fib, setup.kappa_max).value;
    values.raw[Term::GlobalCurvature.index()] = setup.fiber_quad.global_curvature(&fib).value;
    values.max_kappa = setup.fiber_quad.max_curvature(&fib);
    if !setup.symmetry_planes.is_empty() {
        values.raw[Term::Symmetry.index()] =
            crate::fiber::symmetry_penalty(&fib, &setup.symmetry_planes)?.value;
    }

    Ok(EvaluatedDesign { ls, fib, analysis, solution, values })
}

/// Volume constraint `g = V / (fraction V0) - 1` (non-positive when
/// feasible).
pub fn volume_constraint_value(setup: &ProblemSetup, evaluated: &EvaluatedDesign) -> Option<f64> {
    let fraction = setup.volume_fraction_max?;
    Some(evaluated.values.volume / (fraction * setup.domain_volume) - 1.0)
}

/// Gradient of one objective term over the design vector.
#[derive(Debug, Clone)]
pub struct TermGradient {
    pub term: Term,
    pub raw_value: f64,
    pub gradient: Vec<f64>,
}

/// Full gradient report: per-term raw gradients, the weighted total and the
/// volume constraint.
pub struct GradientReport {
    pub terms: Vec<TermGradient>,
    pub total: Vec<f64>,
    pub constraint: Option<(f64, Vec<f64>)>,
    pub values: TermValues,
}

impl GradientReport {
    /// Rebuilds the total from the per-term gradients (identity check).
    pub fn reconstruct_total(&self, weights: &ObjectiveWeights) -> Vec<f64> {
        let n = self.total.len();
        let mut out = vec![0.0; n];
        for tg in &self.terms {
            let w = weights.weight(tg.term);
            if w != 0.0 {
                let s = w / weights.normalizer(tg.term);
                for (o, g) in out.iter_mut().zip(&tg.gradient) {
                    *o += s * g;
                }
            }
        }
        out
    }

    pub fn term(&self, t: Term) -> Option<&TermGradient> {
        self.terms.iter().find(|tg| tg.term == t)
    }
}

/// Computes the adjoint design gradient of every active term.
pub fn adjoint_gradient(
    setup: &ProblemSetup,
    evaluated: &EvaluatedDesign,
    weights: &ObjectiveWeights,
    target: Option<&TargetField>,
) -> Result<GradientReport, AdjointError> {
    let n = setup.layout.len();
    let mut terms: Vec<TermGradient> = Vec::new();

    if setup.mechanics_enabled {
        let analysis = evaluated.analysis.as_ref().expect("analysis present");
        let solution = evaluated.solution.as_ref().expect("solution present");
        let grad = strain_energy_gradient(setup, evaluated, analysis, solution)?;
        terms.push(TermGradient {
            term: Term::StrainEnergy,
            raw_value: evaluated.values.raw[Term::StrainEnergy.index()],
            gradient: grad,
        });
    }

    if setup.layout.ls_designable {
        let interface = extract_interface(&evaluated.ls, &setup.grid)?;
        let (perim, g_ls) = perimeter_penalty(&evaluated.ls, &setup.grid, &interface)?;
        let mut g = vec![0.0; n];
        setup.layout.add_ls_gradient(&g_ls, &mut g);
        terms.push(TermGradient { term: Term::Perimeter, raw_value: perim, gradient: g });

        if let (Some(reg), Some(t)) = (&setup.regularizer, target) {
            let (v, g_ls) = reg.penalty(&evaluated.ls, t);
            let mut g = vec![0.0; n];
            setup.layout.add_ls_gradient(&g_ls, &mut g);
            terms.push(TermGradient { term: Term::Regularization, raw_value: v, gradient: g });
        }
    }

    let mis = setup.fiber_quad.misalignment(&evaluated.fib);
    let mut g = vec![0.0; n];
    setup.layout.add_fiber_gradient(&mis.grad_xy, mis.grad_z.as_deref(), &mut g);
    terms.push(TermGradient { term: Term::Misalignment, raw_value: mis.value, gradient: g });

    let lcur = setup.fiber_quad.local_curvature(&evaluated.fib, setup.kappa_max);
    let mut g = vec![0.0; n];
    setup.layout.add_fiber_gradient(&lcur.grad_xy, lcur.grad_z.as_deref(), &mut g);
    terms.push(TermGradient { term: Term::LocalCurvature, raw_value: lcur.value, gradient: g });

    let gcur = setup.fiber_quad.global_curvature(&evaluated.fib);
    let mut g = vec![0.0; n];
    setup.layout.add_fiber_gradient(&gcur.grad_xy, gcur.grad_z.as_deref(), &mut g);
    terms.push(TermGradient { term: Term::GlobalCurvature, raw_value: gcur.value, gradient: g });

    if !setup.symmetry_planes.is_empty() {
        let sym = crate::fiber::symmetry_penalty(&evaluated.fib, &setup.symmetry_planes)?;
        let mut g = vec![0.0; n];
        setup.layout.add_fiber_gradient(&sym.grad_xy, sym.grad_z.as_deref(), &mut g);
        terms.push(TermGradient { term: Term::Symmetry, raw_value: sym.value, gradient: g });
    }

    let mut total = vec![0.0; n];
    for tg in &terms {
        let w = weights.weight(tg.term);
        if w != 0.0 {
            let s = w / weights.normalizer(tg.term);
            for (o, gv) in total.iter_mut().zip(&tg.gradient) {
                *o += s * gv;
            }
        }
    }

    let constraint = if setup.num_constraints() == 1 {
        let analysis = evaluated.analysis.as_ref().expect("volume needs the analysis");
        let fraction = setup.volume_fraction_max.unwrap();
        let den = fraction * setup.domain_volume;
        let g_value = evaluated.values.volume / den - 1.0;
        let mut g_ls = vec![0.0; evaluated.ls.field.coeffs().len()];
        volume_gradient(evaluated, analysis, &mut g_ls)?;
        let mut g = vec![0.0; n];
        setup.layout.add_ls_gradient(&g_ls, &mut g);
        for v in g.iter_mut() {
            *v /= den;
        }
        Some((g_value, g))
    } else {
        None
    };

    Ok(GradientReport { terms, total, constraint, values: evaluated.values.clone() })
}

/// Strain-energy design gradient: adjoint solve per load case on the
/// transposed system, then chain rule through the fiber stiffness (analytic)
/// and the level set (analytic smoothed-Heaviside chain for the ersatz
/// backend, semi-analytic cut-vertex perturbation for the cut-cell backend).
fn strain_energy_gradient(
    setup: &ProblemSetup,
    evaluated: &EvaluatedDesign,
    analysis: &ImmersedAnalysis,
    solution: &Solution,
) -> Result<Vec<f64>, AdjointError> {
    let n = setup.layout.len();
    let ncase = solution.u.len().max(1);
    let case_scale = 1.0 / ncase as f64;
    let mut grad = vec![0.0; n];
    let fib = &evaluated.fib;
    let material = &setup.material;
    let gamma_d = setup.mech_config.c_dirichlet * material.e_eff / analysis.grid.h();

    // adjoint right-hand sides: dF/du = K_bulk u (bulk terms only)
    let mut lambdas: Vec<Vec<f64>> = Vec::with_capacity(ncase);
    for u in &solution.u {
        let mut rhs = vec![0.0; analysis.ndof()];
        for g in analysis.bulk_groups() {
            for p in &g.points {
                let theta = fib.theta_xy.value(&[p.x[0], p.x[1], 0.0]).unwrap_or(0.0);
                let c = material.plane.at(theta);
                let grads = analysis.grid.shape_gradients(g.element, &p.x);
                let b = strain_matrix(&grads);
                let eps = strain_from_dofs(&grads, &g.dofs, u);
                let f = b.transpose() * (c * eps) * (p.w * p.scale);
                for (i, &d) in g.dofs.iter().enumerate() {
                    rhs[d] += f[i];
                }
            }
        }
        lambdas.push(solution.factorization.solve_transpose(&rhs)?);
    }

    // fiber part: (1/2 eps_u dC eps_u - eps_l dC eps_u) B_k at bulk points
    let mut g_xy = vec![0.0; setup.layout.n_xy];
    let mut basis_buf = Vec::new();
    let xy_space = fib.theta_xy.space().clone();
    for g in analysis.bulk_groups() {
        for p in &g.points {
            let x3 = [p.x[0], p.x[1], 0.0];
            let theta = fib.theta_xy.value(&x3).unwrap_or(0.0);
            let (_, dc) = material.plane.at_with_derivative(theta);
            let grads = analysis.grid.shape_gradients(g.element, &p.x);
            let mut factor = 0.0;
            for (ci, u) in solution.u.iter().enumerate() {
                let eps_u = strain_from_dofs(&grads, &g.dofs, u);
                let eps_l = strain_from_dofs(&grads, &g.dofs, &lambdas[ci]);
                let d_eps = dc * eps_u;
                factor += case_scale * (0.5 * eps_u.dot(&d_eps) - eps_l.dot(&d_eps));
            }
            factor *= p.w * p.scale;
            if factor != 0.0 {
                xy_space.eval_basis_into(&x3, &mut basis_buf)?;
                for &(k, bv, _) in &basis_buf {
                    g_xy[k] += factor * bv;
                }
            }
        }
    }
    // Nitsche consistency tractions carry the stiffness
    for p in analysis.dirichlet_points() {
        let value = analysis.dirichlet[p.region_index].value;
        let x3 = [p.q.x[0], p.q.x[1], 0.0];
        let theta = fib.theta_xy.value(&x3).unwrap_or(0.0);
        let (_, dc) = material.plane.at_with_derivative(theta);
        let shapes = analysis.grid.shape_values(p.element, &p.q.x);
        let grads = analysis.grid.shape_gradients(p.element, &p.q.x);
        let b = strain_matrix(&grads);
        let dt = traction_rows(&dc, &b, &p.normal);
        let nmat = displacement_matrix_pub(&shapes);
        let w = p.q.w * p.q.scale;
        let ud = value.at(&p.q.x);
        let udv = Vector2::new(ud[0], ud[1]);
        let mut factor = 0.0;
        for (ci, u) in solution.u.iter().enumerate() {
            let uv = gather(&p.dofs, u);
            let lv = gather(&p.dofs, &lambdas[ci]);
            // d(ke) u = -N^T (dT u) + dT^T (N u); d(fe) = dT^T u_D
            let dke_u = -nmat.transpose() * (dt * uv) + dt.transpose() * (nmat * uv);
            let dfe = dt.transpose() * udv;
            factor += case_scale * (lv.dot(&dfe) - lv.dot(&dke_u));
        }
        factor *= w;
        if factor != 0.0 {
            xy_space.eval_basis_into(&x3, &mut basis_buf)?;
            for &(k, bv, _) in &basis_buf {
                g_xy[k] += factor * bv;
            }
        }
    }
    setup.layout.add_fiber_gradient(&g_xy, None, &mut grad);

    if setup.layout.ls_designable {
        let mut g_ls = vec![0.0; evaluated.ls.field.coeffs().len()];
        match analysis.backend() {
            Backend::Ersatz => ersatz_levelset_gradient(
                setup, evaluated, analysis, solution, &lambdas, gamma_d, &mut g_ls,
            )?,
            Backend::CutCell => {
                cutcell_levelset_gradient(setup, evaluated, analysis, solution, &lambdas, &mut g_ls)?
            }
        }
        setup.layout.add_ls_gradient(&g_ls, &mut grad);
    }

    Ok(grad)
}

fn gather(dofs: &[usize; 8], v: &[f64]) -> SMatrix<f64, 8, 1> {
    let mut out = SMatrix::<f64, 8, 1>::zeros();
    for i in 0..8 {
        out[i] = v[dofs[i]];
    }
    out
}

fn traction_rows(c: &Matrix3<f64>, b: &SMatrix<f64, 3, 8>, normal: &[f64; 2]) -> SMatrix<f64, 2, 8> {
    let s = c * b;
    let mut t = SMatrix::<f64, 2, 8>::zeros();
    for j in 0..8 {
        t[(0, j)] = s[(0, j)] * normal[0] + s[(2, j)] * normal[1];
        t[(1, j)] = s[(2, j)] * normal[0] + s[(1, j)] * normal[1];
    }
    t
}

/// Ersatz backend: every geometric dependence runs through the smooth
/// material scaling `s(phi)`, differentiated analytically.
#[allow(clippy::too_many_arguments)]
fn ersatz_levelset_gradient(
    setup: &ProblemSetup,
    evaluated: &EvaluatedDesign,
    analysis: &ImmersedAnalysis,
    solution: &Solution,
    lambdas: &[Vec<f64>],
    gamma_d: f64,
    g_ls: &mut [f64],
) -> Result<(), AdjointError> {
    let fib = &evaluated.fib;
    let material = &setup.material;
    let ncase = solution.u.len().max(1);
    let case_scale = 1.0 / ncase as f64;
    let ls_space = evaluated.ls.space().clone();
    let mut buf = Vec::new();

    // bulk: d(scale)/dphi * (1/2 eps_u C eps_u - eps_l C eps_u)
    for g in analysis.bulk_groups() {
        for p in &g.points {
            let ds = analysis.ersatz_scale_deriv(p.phi);
            if ds == 0.0 {
                continue;
            }
            let x3 = [p.x[0], p.x[1], 0.0];
            let theta = fib.theta_xy.value(&x3).unwrap_or(0.0);
            let c = material.plane.at(theta);
            let grads = analysis.grid.shape_gradients(g.element, &p.x);
            let mut factor = 0.0;
            for (ci, u) in solution.u.iter().enumerate() {
                let eps_u = strain_from_dofs(&grads, &g.dofs, u);
                let eps_l = strain_from_dofs(&grads, &g.dofs, &lambdas[ci]);
                let ceps = c * eps_u;
                factor += case_scale * (0.5 * eps_u.dot(&ceps) - eps_l.dot(&ceps));
            }
            factor *= p.w * ds;
            if factor != 0.0 {
                ls_space.eval_basis_into(&x3, &mut buf)?;
                for &(k, bv, _) in &buf {
                    g_ls[k] += factor * bv;
                }
            }
        }
    }

    // Nitsche terms scale with s(phi)
    for p in analysis.dirichlet_points() {
        let ds = analysis.ersatz_scale_deriv(p.q.phi);
        if ds == 0.0 {
            continue;
        }
        let value = analysis.dirichlet[p.region_index].value;
        let x3 = [p.q.x[0], p.q.x[1], 0.0];
        let theta = fib.theta_xy.value(&x3).unwrap_or(0.0);
        let c = material.plane.at(theta);
        let shapes = analysis.grid.shape_values(p.element, &p.q.x);
        let grads = analysis.grid.shape_gradients(p.element, &p.q.x);
        let b = strain_matrix(&grads);
        let tmat = traction_rows(&c, &b, &p.normal);
        let nmat = displacement_matrix_pub(&shapes);
        let ud = value.at(&p.q.x);
        let udv = Vector2::new(ud[0], ud[1]);
        let mut factor = 0.0;
        for (ci, u) in solution.u.iter().enumerate() {
            let uv = gather(&p.dofs, u);
            let lv = gather(&p.dofs, &lambdas[ci]);
            let ke_u = -nmat.transpose() * (tmat * uv)
                + tmat.transpose() * (nmat * uv)
                + gamma_d * nmat.transpose() * (nmat * uv);
            let fe = tmat.transpose() * udv + gamma_d * nmat.transpose() * udv;
            factor += case_scale * (lv.dot(&fe) - lv.dot(&ke_u));
        }
        factor *= p.q.w * ds;
        if factor != 0.0 {
            ls_space.eval_basis_into(&x3, &mut buf)?;
            for &(k, bv, _) in &buf {
                g_ls[k] += factor * bv;
            }
        }
    }

    // tractions scale with s(phi): +lambda . d f
    for (ci, case) in setup.loads.iter().enumerate() {
        for p in analysis.traction_points(case) {
            let ds = analysis.ersatz_scale_deriv(p.q.phi);
            if ds == 0.0 {
                continue;
            }
            let traction = case.tractions[p.region_index].1;
            let shapes = analysis.grid.shape_values(p.element, &p.q.x);
            let lv = &lambdas[ci];
            let mut dot = 0.0;
            for i in 0..4 {
                dot += shapes[i]
                    * (traction[0] * lv[p.dofs[2 * i]] + traction[1] * lv[p.dofs[2 * i + 1]]);
            }
            let factor = case_scale * p.q.w * ds * dot;
            if factor != 0.0 {
                let x3 = [p.q.x[0], p.q.x[1], 0.0];
                ls_space.eval_basis_into(&x3, &mut buf)?;
                for &(k, bv, _) in &buf {
                    g_ls[k] += factor * bv;
                }
            }
        }
    }
    Ok(())
}

/// Cut-cell backend: semi-analytic shape derivative. Nodal level-set values
/// enter through the cut-vertex positions; each cut element's bulk response
/// is re-integrated under nodal perturbations with the dof topology frozen
/// (ghost and bedding terms are frozen stabilization).
fn cutcell_levelset_gradient(
    setup: &ProblemSetup,
    evaluated: &EvaluatedDesign,
    analysis: &ImmersedAnalysis,
    solution: &Solution,
    lambdas: &[Vec<f64>],
    g_ls: &mut [f64],
) -> Result<(), AdjointError> {
    let dec = analysis.decomposition().expect("cut-cell backend");
    let dofmap = analysis.dof_map().expect("cut-cell backend");
    let fib = &evaluated.fib;
    let material = &setup.material;
    let ncase = solution.u.len().max(1);
    let case_scale = 1.0 / ncase as f64;
    let grid = &analysis.grid;
    let h = grid.h();
    let delta = 1e-7 * h;
    let ls_space = evaluated.ls.space().clone();
    let mut buf = Vec::new();

    const TRI_Q: [(f64, f64, f64); 3] = [
        (2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0),
        (1.0 / 6.0, 2.0 / 3.0, 1.0 / 3.0),
        (1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0),
    ];
    // bulk response of one element's solid polygons under frozen dofs
    let response = |e: usize, v: [f64; 4], dofs_ref: &[[usize; 8]]| -> f64 {
        let polys = polygons_for_values(&evaluated.ls, grid, e, &v);
        let mut acc = 0.0;
        for (pi, poly) in polys.iter().enumerate() {
            let Some(dofs) = dofs_ref.get(pi) else { break };
            for t in &poly.tris {
                let a = poly.verts[t[0]];
                let b = poly.verts[t[1]];
                let c = poly.verts[t[2]];
                let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
                if area <= 0.0 {
                    continue;
                }
                for &(l1, l2, wq) in &TRI_Q {
                    let l0 = 1.0 - l1 - l2;
                    let x =
                        [l0 * a[0] + l1 * b[0] + l2 * c[0], l0 * a[1] + l1 * b[1] + l2 * c[1]];
                    let theta = fib.theta_xy.value(&[x[0], x[1], 0.0]).unwrap_or(0.0);
                    let cmat = material.plane.at(theta);
                    let grads = grid.shape_gradients(e, &x);
                    for (ci, u) in solution.u.iter().enumerate() {
                        let eps_u = strain_from_dofs(&grads, dofs, u);
                        let eps_l = strain_from_dofs(&grads, dofs, &lambdas[ci]);
                        let ceps = cmat * eps_u;
                        acc += case_scale * wq * area * (0.5 * eps_u.dot(&ceps) - eps_l.dot(&ceps));
                    }
                }
            }
        }
        acc
    };

    for es in &dec.solids {
        let e = es.element;
        if es.polygons.iter().all(|p| p.full_cell) {
            continue;
        }
        let si = dec.solid_index[e].unwrap();
        let dofs_ref: Vec<[usize; 8]> =
            (0..es.polygons.len()).map(|pi| dofmap.poly_dofs[dofmap.polygon_id(si, pi)]).collect();
        let nodes = grid.elem_nodes(e);
        let v0: [f64; 4] = [
            dec.nodal_phi[nodes[0]],
            dec.nodal_phi[nodes[1]],
            dec.nodal_phi[nodes[2]],
            dec.nodal_phi[nodes[3]],
        ];
        for corner in 0..4 {
            let mut vp = v0;
            vp[corner] += delta;
            let mut vm = v0;
            vm[corner] -= delta;
            let d = (response(e, vp, &dofs_ref) - response(e, vm, &dofs_ref)) / (2.0 * delta);
            if d != 0.0 {
                let pos = grid.node_pos(nodes[corner]);
                ls_space.eval_basis_into(&[pos[0], pos[1], 0.0], &mut buf)?;
                for &(k, bv, _) in &buf {
                    g_ls[k] += d * bv;
                }
            }
        }
    }
    let _ = setup;
    Ok(())
}

/// Volume gradient over level-set coefficients: analytic smoothed-Heaviside
/// chain for ersatz, semi-analytic cut-vertex perturbation for cut cells.
fn volume_gradient(
    evaluated: &EvaluatedDesign,
    analysis: &ImmersedAnalysis,
    g_ls: &mut [f64],
) -> Result<(), AdjointError> {
    let ls_space = evaluated.ls.space().clone();
    let mut buf = Vec::new();
    match analysis.backend() {
        Backend::Ersatz => {
            for g in analysis.bulk_groups() {
                for p in &g.points {
                    let (_, dh) = analysis.ersatz_heaviside(p.phi);
                    if dh == 0.0 {
                        continue;
                    }
                    ls_space.eval_basis_into(&[p.x[0], p.x[1], 0.0], &mut buf)?;
                    for &(k, bv, _) in &buf {
                        g_ls[k] += p.w * dh * bv;
                    }
                }
            }
        }
        Backend::CutCell => {
            let dec = analysis.decomposition().expect("cut-cell backend");
            let grid = &analysis.grid;
            let delta = 1e-7 * grid.h();
            for es in &dec.solids {
                let e = es.element;
                if es.polygons.iter().all(|p| p.full_cell) {
                    continue;
                }
                let nodes = grid.elem_nodes(e);
                let v0: [f64; 4] = [
                    dec.nodal_phi[nodes[0]],
                    dec.nodal_phi[nodes[1]],
                    dec.nodal_phi[nodes[2]],
                    dec.nodal_phi[nodes[3]],
                ];
                let area = |v: [f64; 4]| -> f64 {
                    polygons_for_values(&evaluated.ls, grid, e, &v).iter().map(|p| p.area).sum()
                };
                for corner in 0..4 {
                    let mut vp = v0;
                    vp[corner] += delta;
                    let mut vm = v0;
                    vm[corner] -= delta;
                    let d = (area(vp) - area(vm)) / (2.0 * delta);
                    if d != 0.0 {
                        let pos = grid.node_pos(nodes[corner]);
                        ls_space.eval_basis_into(&[pos[0], pos[1], 0.0], &mut buf)?;
                        for &(k, bv, _) in &buf {
                            g_ls[k] += d * bv;
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Finite-difference verification of an analytic gradient at sampled
/// components.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// (component, analytic, finite difference, relative error)
    pub samples: Vec<(usize, f64, f64, f64)>,
    pub max_rel: f64,
    pub median_rel: f64,
}

impl FdReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_rel <= threshold
    }
}

/// Central-difference check of `gradient` against `eval` at the selected
/// `indices` of `x`.
pub fn fd_verify(
    mut eval: impl FnMut(&[f64]) -> f64,
    gradient: &[f64],
    x: &[f64],
    indices: &[usize],
    step: f64,
) -> FdReport {
    let mut samples = Vec::with_capacity(indices.len());
    let scale = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    for &k in indices {
        let mut xp = x.to_vec();
        xp[k] += step;
        let vp = eval(&xp);
        let mut xm = x.to_vec();
        xm[k] -= step;
        let vm = eval(&xm);
        let fd = (vp - vm) / (2.0 * step);
        let rel = (gradient[k] - fd).abs() / fd.abs().max(1e-12 * scale.max(1.0));
        samples.push((k, gradient[k], fd, rel));
    }
    let mut rels: Vec<f64> = samples.iter().map(|s| s.3).collect();
    rels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let max_rel = rels.last().copied().unwrap_or(0.0);
    let median_rel = if rels.is_empty() { 0.0 } else { rels[rels.len() / 2] };
    FdReport { samples, max_rel, median_rel }
}

/// Picks up to `count` gradient components with significant magnitude from
/// the index range `[lo, hi)`, deterministically spread.
pub fn significant_indices(gradient: &[f64], count: usize, lo: usize, hi: usize) -> Vec<usize> {
    let hi = hi.min(gradient.len());
    let mut candidates: Vec<usize> = (lo..hi).collect();
    let max = candidates.iter().map(|&k| gradient[k].abs()).fold(0.0f64, f64::max);
    candidates.retain(|&k| gradient[k].abs() >= 1e-3 * max);
    if candidates.is_empty() {
        return (lo..hi).take(count).collect();
    }
    let stride = (candidates.len() / count.max(1)).max(1);
    candidates.into_iter().step_by(stride).take(count).collect()
}
