//! Optimization driver: continuation schedule, GCMMA stepping, convergence
//! bookkeeping and run artifacts (history CSV, report, VTK fields,
//! streamline SVG, checkpoints).

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use super::config::ProblemConfig;
use super::schedule::Continuation;
use super::setup::{build_problem, BuiltProblem, SetupError};
use super::streamline::{trace_streamlines, StreamlineOptions};
use super::svg::write_streamline_svg;
use super::vtk::{write_atomic, StructuredPoints, TriangleMesh, VtkError};
use crate::adjoint::{
    adjoint_gradient, evaluate_design, volume_constraint_value, AdjointError, EvaluatedDesign,
    ObjectiveWeights, ProblemSetup, TermValues,
};
use crate::gcmma::{Gcmma, MmaOptions, OptimizerError};
use crate::levelset::{extract_interface, signed_distance, TargetField};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    Adjoint(#[from] AdjointError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Vtk(#[from] VtkError),
    #[error("design evaluation failed twice at iteration {0}; state dumped to {1}")]
    Aborted(usize, PathBuf),
}

/// CLI-facing run options layered over a preset or config file.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub backend: Option<crate::mechanics::Backend>,
    pub out_dir: Option<PathBuf>,
    pub max_iter: Option<usize>,
    pub paper_scale: bool,
    pub case: Option<String>,
}

/// One row of the convergence history.
#[derive(Debug, Clone)]
pub struct HistoryRow {
    pub iteration: usize,
    pub objective: f64,
    pub normalized: [f64; 7],
    pub constraint: f64,
    pub max_kappa: f64,
    pub design_change: f64,
}

pub const HISTORY_HEADER: &str = "iteration,objective,strain_energy,perimeter,regularization,misalignment,local_curvature,global_curvature,symmetry,volume_constraint,max_kappa,design_change";

/// Output of a finished (or aborted) optimization run.
pub struct RunResult {
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    pub values: TermValues,
    pub normalized: [f64; 7],
    pub weights: ObjectiveWeights,
    pub constraint: Option<f64>,
    pub design: Vec<f64>,
    pub history: Vec<HistoryRow>,
    pub out_dir: PathBuf,
}

fn normalized_values(values: &TermValues, weights: &ObjectiveWeights) -> [f64; 7] {
    let mut out = [0.0; 7];
    for (i, v) in values.raw.iter().enumerate() {
        out[i] = v / weights.normalizers[i];
    }
    out
}

/// Runs a named preset with overrides.
pub fn run_preset(name: &str, overrides: &RunOverrides) -> Result<RunResult, RunError> {
    let mut cfg = super::presets::preset(name).ok_or_else(|| {
        RunError::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("unknown preset `{name}`; available: {}", super::presets::PRESET_NAMES.join(", ")),
        ))
    })?;
    apply_overrides(&mut cfg, overrides)?;
    run_problem(&cfg)
}

pub fn apply_overrides(cfg: &mut ProblemConfig, overrides: &RunOverrides) -> Result<(), RunError> {
    if let Some(case) = &overrides.case {
        super::presets::apply_case(cfg, case)
            .map_err(|e| RunError::Io(std::io::Error::new(std::io::ErrorKind::InvalidInput, e)))?;
    }
    if overrides.paper_scale {
        super::presets::apply_paper_scale(cfg);
    }
    if let Some(b) = overrides.backend {
        cfg.backend = b;
    }
    if let Some(m) = overrides.max_iter {
        cfg.schedule.max_iter = m;
    }
    if let Some(dir) = &overrides.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(())
}

/// Runs the optimization described by a configuration, writing all artifacts
/// under its output directory. `history.csv` and `report.txt` appear even on
/// early aborts.
pub fn run_problem(cfg: &ProblemConfig) -> Result<RunResult, RunError> {
    let start = Instant::now();
    // fail fast on unwritable output paths
    std::fs::create_dir_all(cfg.out_dir.join("fields"))?;
    std::fs::create_dir_all(cfg.out_dir.join("checkpoints"))?;
    write_atomic(&cfg.out_dir.join("report.txt"), "status = running\n")?;

    let built = build_problem(cfg)?;
    let outcome = drive(cfg, &built);

    // artifacts are written regardless of how the run ended
    let (result, error) = match outcome {
        Ok(r) => (r, None),
        Err((partial, e)) => (partial, Some(e)),
    };
    write_history(&cfg.out_dir.join("history.csv"), &result.history)?;
    write_report(cfg, &result, error.as_deref(), start.elapsed().as_secs_f64())?;
    if let Some(e) = error {
        return Err(RunError::Io(std::io::Error::other(e)));
    }
    Ok(result)
}

type DriveOutcome = Result<RunResult, (RunResult, String)>;

fn drive(cfg: &ProblemConfig, built: &BuiltProblem) -> DriveOutcome {
    let setup = &built.setup;
    let schedule = cfg.schedule;
    let mut continuation = Continuation::new(cfg.weights, schedule, built.initial_weights.clone());
    let mut opt = Gcmma::new(
        built.x0.clone(),
        built.bounds.0.clone(),
        built.bounds.1.clone(),
        setup.num_constraints(),
        MmaOptions { max_inner: schedule.max_inner, ..Default::default() },
    )
    .map_err(|e| (empty_result(cfg, built), e.to_string()))?;

    let mut history: Vec<HistoryRow> = Vec::new();
    let mut z_prev = f64::INFINITY;
    let mut prev_design = built.x0.clone();
    let mut converged = false;
    let mut iterations = 0;
    let mut last_eval: Option<(EvaluatedDesign, ObjectiveWeights)> = None;

    for iter in 1..=schedule.max_iter {
        iterations = iter;
        let design = opt.current().to_vec();
        // frozen regularization target for this outer iterate
        let target = build_target(setup, &design);
        let evaluated = match evaluate_design(setup, &design, target.as_ref()) {
            Ok(e) => e,
            Err(e) => {
                let dump = cfg.out_dir.join("checkpoints").join("abort.txt");
                let _ = write_checkpoint(&dump, cfg, iter, &design, &continuation.weights);
                return Err((
                    finish_result(cfg, built, last_eval, history, converged, iterations),
                    format!("evaluation failed at iteration {iter}: {e}"),
                ));
            }
        };
        let renormalized = continuation.begin_iteration(iter, &evaluated.values.raw);
        let weights = continuation.weights.clone();
        let z = weights.combine(&evaluated.values.raw);
        let g = volume_constraint_value(setup, &evaluated);

        // gradients
        let report = match adjoint_gradient(setup, &evaluated, &weights, target.as_ref()) {
            Ok(r) => r,
            Err(e) => {
                let dump = cfg.out_dir.join("checkpoints").join("abort.txt");
                let _ = write_checkpoint(&dump, cfg, iter, &design, &weights);
                return Err((
                    finish_result(cfg, built, last_eval, history, converged, iterations),
                    format!("gradient failed at iteration {iter}: {e}"),
                ));
            }
        };

        let change = prev_design
            .iter()
            .zip(&design)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        history.push(HistoryRow {
            iteration: iter,
            objective: z,
            normalized: normalized_values(&evaluated.values, &weights),
            constraint: g.unwrap_or(0.0),
            max_kappa: evaluated.values.max_kappa,
            design_change: change,
        });

        if iter % cfg.checkpoint_every == 0 {
            let _ = export_fields(cfg, setup, &evaluated, iter);
            let _ = write_checkpoint(
                &cfg.out_dir.join("checkpoints").join(format!("iter{iter:04}.txt")),
                cfg,
                iter,
                &design,
                &weights,
            );
        }

        // convergence: relative objective change below tol at comparable
        // normalizers, with the constraint satisfied
        if !renormalized && z_prev.is_finite() {
            let rel = (z - z_prev).abs() / z_prev.abs().max(1e-30);
            let feasible = g.map_or(true, |gv| gv <= 1e-6);
            if rel < schedule.tol && feasible && iter > schedule.activation + 1 {
                last_eval = Some((evaluated, weights));
                converged = true;
                break;
            }
        }
        z_prev = z;
        prev_design = design.clone();

        // GCMMA step
        let (fi, dfi): (Vec<f64>, Vec<Vec<f64>>) = match (&g, &report.constraint) {
            (Some(gv), Some((_, gg))) => (vec![*gv], vec![gg.clone()]),
            _ => (vec![], vec![]),
        };
        let inner = continuation.inner_budget(iter);
        let weights_for_eval = weights.clone();
        opt.outer_step(
            z,
            &report.total,
            &fi,
            &dfi,
            |cand| {
                match evaluate_design(setup, cand, target.as_ref()) {
                    Ok(ev) => {
                        let zc = weights_for_eval.combine(&ev.values.raw);
                        let gc = volume_constraint_value(setup, &ev).map_or(vec![], |v| vec![v]);
                        (zc, gc)
                    }
                    // a failed candidate is treated as non-conservative and
                    // retried with tighter approximations
                    Err(_) => (f64::INFINITY, vec![f64::INFINITY; setup.num_constraints()]),
                }
            },
            inner,
        );
        last_eval = Some((evaluated, weights));
    }

    Ok(finish_result(cfg, built, last_eval, history, converged, iterations))
}

fn empty_result(cfg: &ProblemConfig, built: &BuiltProblem) -> RunResult {
    RunResult {
        converged: false,
        iterations: 0,
        objective: f64::NAN,
        values: TermValues::default(),
        normalized: [0.0; 7],
        weights: built.initial_weights.clone(),
        constraint: None,
        design: built.x0.clone(),
        history: Vec::new(),
        out_dir: cfg.out_dir.clone(),
    }
}

fn finish_result(
    cfg: &ProblemConfig,
    built: &BuiltProblem,
    last_eval: Option<(EvaluatedDesign, ObjectiveWeights)>,
    history: Vec<HistoryRow>,
    converged: bool,
    iterations: usize,
) -> RunResult {
    let Some((evaluated, weights)) = last_eval else {
        let mut r = empty_result(cfg, built);
        r.history = history;
        r.iterations = iterations;
        return r;
    };
    let setup = &built.setup;
    let constraint = volume_constraint_value(setup, &evaluated);
    let design = setup.layout.pack(&evaluated.ls, &evaluated.fib);
    // final artifacts; io failures surface in the report, not as a crash
    let _ = export_fields(cfg, setup, &evaluated, iterations);
    let _ = export_state(cfg, setup, &evaluated);
    let _ = export_streamlines(cfg, setup, &evaluated);
    let _ = write_checkpoint(
        &cfg.out_dir.join("checkpoints").join("final.txt"),
        cfg,
        iterations,
        &design,
        &weights,
    );
    RunResult {
        converged,
        iterations,
        objective: weights.combine(&evaluated.values.raw),
        normalized: normalized_values(&evaluated.values, &weights),
        values: evaluated.values.clone(),
        weights,
        constraint,
        design,
        history,
        out_dir: cfg.out_dir.clone(),
    }
}

fn build_target(setup: &ProblemSetup, design: &[f64]) -> Option<TargetField> {
    let reg = setup.regularizer.as_ref()?;
    let (ls, _) = setup.unpack(design);
    // an interface-free level set skips regularization this iterate
    reg.build_target(&ls, &setup.grid).ok()
}

fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<(), std::io::Error> {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{:.17e},{},{:.17e},{:.17e},{:.17e}\n",
            r.iteration,
            r.objective,
            r.normalized.iter().map(|v| format!("{v:.17e}")).collect::<Vec<_>>().join(","),
            r.constraint,
            r.max_kappa,
            r.design_change,
        ));
    }
    write_atomic(path, &s)
}

fn write_report(
    cfg: &ProblemConfig,
    result: &RunResult,
    error: Option<&str>,
    wall_seconds: f64,
) -> Result<(), std::io::Error> {
    let mut s = String::new();
    let status = match (error, result.converged) {
        (Some(_), _) => "aborted",
        (None, true) => "converged",
        (None, false) => "max_iterations",
    };
    s.push_str(&format!("status = {status}\n"));
    if let Some(e) = error {
        s.push_str(&format!("error = {e}\n"));
    }
    s.push_str(&format!("iterations = {}\n", result.iterations));
    s.push_str(&format!("objective = {:.12e}\n", result.objective));
    for t in crate::adjoint::TERMS {
        let i = t.index();
        s.push_str(&format!(
            "term.{} = raw {:.12e} normalized {:.12e} weight {} normalizer {:.12e}\n",
            t.name(),
            result.values.raw[i],
            result.normalized[i],
            result.weights.weights[i],
            result.weights.normalizers[i],
        ));
    }
    s.push_str(&format!("max_kappa = {:.12e}\n", result.values.max_kappa));
    s.push_str(&format!("volume = {:.12e}\n", result.values.volume));
    if let Some(g) = result.constraint {
        s.push_str(&format!("volume_constraint = {g:.12e}\n"));
    }
    for (i, e) in result.values.energies.iter().enumerate() {
        s.push_str(&format!("strain_energy.case{} = {e:.12e}\n", i + 1));
    }
    s.push_str(&format!("wall_seconds = {wall_seconds:.3}\n"));
    for w in cfg.warnings() {
        s.push_str(&format!("warning = {w}\n"));
    }
    s.push_str("\n# resolved configuration\n");
    s.push_str(&cfg.to_text());
    write_atomic(&cfg.out_dir.join("report.txt"), &s)
}

/// Versioned text checkpoint with full-precision coefficients.
pub fn write_checkpoint(
    path: &Path,
    cfg: &ProblemConfig,
    iteration: usize,
    design: &[f64],
    weights: &ObjectiveWeights,
) -> Result<(), std::io::Error> {
    let mut s = String::new();
    s.push_str("version = 1\n");
    s.push_str(&format!("name = {}\n", cfg.name));
    s.push_str(&format!("iteration = {iteration}\n"));
    for t in crate::adjoint::TERMS {
        s.push_str(&format!(
            "weight.{} = {:.17e}\nnormalizer.{} = {:.17e}\n",
            t.name(),
            weights.weights[t.index()],
            t.name(),
            weights.normalizers[t.index()],
        ));
    }
    s.push_str(&format!("design_len = {}\n", design.len()));
    s.push_str("design =");
    for v in design {
        s.push_str(&format!(" {v:.17e}"));
    }
    s.push('\n');
    write_atomic(path, &s)
}

/// Reads a checkpoint back: (iteration, design, weights).
pub fn read_checkpoint(path: &Path) -> Result<(usize, Vec<f64>, ObjectiveWeights), std::io::Error> {
    let text = std::fs::read_to_string(path)?;
    let mut iteration = 0usize;
    let mut design = Vec::new();
    let mut weights = ObjectiveWeights::default();
    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else { continue };
        let key = key.trim();
        let value = value.trim();
        if key == "iteration" {
            iteration = value.parse().unwrap_or(0);
        } else if key == "design" {
            design = value.split_whitespace().filter_map(|t| t.parse().ok()).collect();
        } else if let Some(name) = key.strip_prefix("weight.") {
            if let Some(t) = crate::adjoint::TERMS.iter().find(|t| t.name() == name) {
                weights.weights[t.index()] = value.parse().unwrap_or(0.0);
            }
        } else if let Some(name) = key.strip_prefix("normalizer.") {
            if let Some(t) = crate::adjoint::TERMS.iter().find(|t| t.name() == name) {
                weights.normalizers[t.index()] = value.parse().unwrap_or(1.0);
            }
        }
    }
    Ok((iteration, design, weights))
}

/// Design fields sampled on grids and written as structured points.
fn export_fields(
    cfg: &ProblemConfig,
    setup: &ProblemSetup,
    evaluated: &EvaluatedDesign,
    iteration: usize,
) -> Result<(), VtkError> {
    let path = cfg.out_dir.join("fields").join(format!("fields_{iteration:04}.vtk"));
    if cfg.dim == 2 {
        let grid = &setup.grid;
        let dims = [grid.nx() + 1, grid.ny() + 1, 1];
        let mut phi = Vec::with_capacity(dims[0] * dims[1]);
        let mut theta = Vec::with_capacity(dims[0] * dims[1]);
        let mut tangent = Vec::with_capacity(dims[0] * dims[1]);
        // VTK structured points expect x fastest
        for iy in 0..dims[1] {
            for ix in 0..dims[0] {
                let p = grid.node_pos(grid.node_id(ix, iy));
                let x3 = [p[0], p[1], 0.0];
                phi.push(evaluated.ls.field.value(&x3).unwrap_or(0.0));
                let th = evaluated.fib.theta_xy.value(&x3).unwrap_or(0.0);
                theta.push(th);
                tangent.push([th.cos(), th.sin(), 0.0]);
            }
        }
        let mut phi_xfirst = vec![0.0; phi.len()];
        phi_xfirst.copy_from_slice(&phi);
        StructuredPoints {
            dims,
            origin: [grid.lower()[0], grid.lower()[1], 0.0],
            spacing: [grid.h(), grid.h(), 1.0],
            scalars: vec![("phi".into(), phi_xfirst), ("theta_xy".into(), theta)],
            vectors: vec![("tangent".into(), tangent)],
        }
        .write(&path)
    } else {
        // 3D fiber fields on the fiber mesh nodes
        let space = evaluated.fib.theta_xy.space().clone();
        let n = [space.elements(0), space.elements(1), space.elements(2)];
        let dims = [n[0] + 1, n[1] + 1, n[2] + 1];
        let lo = space.lower();
        let hi = space.upper();
        let spacing = [
            (hi[0] - lo[0]) / n[0] as f64,
            (hi[1] - lo[1]) / n[1] as f64,
            (hi[2] - lo[2]) / n[2] as f64,
        ];
        let mut theta_xy = Vec::new();
        let mut theta_z = Vec::new();
        let mut tangent = Vec::new();
        for iz in 0..dims[2] {
            for iy in 0..dims[1] {
                for ix in 0..dims[0] {
                    let x = [
                        lo[0] + ix as f64 * spacing[0],
                        lo[1] + iy as f64 * spacing[1],
                        lo[2] + iz as f64 * spacing[2],
                    ];
                    let txy = evaluated.fib.theta_xy.value(&x).unwrap_or(0.0);
                    let tz = evaluated
                        .fib
                        .theta_z
                        .as_ref()
                        .map(|f| f.value(&x).unwrap_or(0.0))
                        .unwrap_or(0.0);
                    theta_xy.push(txy);
                    theta_z.push(tz);
                    let t = crate::fiber::tangent(txy, tz);
                    tangent.push([t.x, t.y, t.z]);
                }
            }
        }
        StructuredPoints {
            dims,
            origin: lo,
            spacing,
            scalars: vec![("theta_xy".into(), theta_xy), ("theta_z".into(), theta_z)],
            vectors: vec![("tangent".into(), tangent)],
        }
        .write(&path)
    }
}

/// Displacement, stress and strain-energy density on the solid quadrature
/// cells of the final design.
fn export_state(
    cfg: &ProblemConfig,
    setup: &ProblemSetup,
    evaluated: &EvaluatedDesign,
) -> Result<(), VtkError> {
    if !setup.mechanics_enabled {
        return Ok(());
    }
    let Some(solution) = evaluated.solution.as_ref() else { return Ok(()) };
    let Ok(dec) = crate::mechanics::decompose(&evaluated.ls, &setup.grid) else { return Ok(()) };
    let analysis = evaluated.analysis.as_ref().expect("analysis present");
    let u = &solution.u[0];
    let material = &setup.material;
    let mut points: Vec<[f64; 3]> = Vec::new();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    let mut disp: Vec<[f64; 3]> = Vec::new();
    let mut energy: Vec<f64> = Vec::new();
    let mut sxx: Vec<f64> = Vec::new();
    let mut syy: Vec<f64> = Vec::new();
    let mut sxy: Vec<f64> = Vec::new();
    for es in &dec.solids {
        for poly in &es.polygons {
            let base = points.len();
            for v in &poly.verts {
                points.push([v[0], v[1], 0.0]);
                let d = analysis.displacement_at(u, v);
                disp.push([d[0], d[1], 0.0]);
            }
            for t in &poly.tris {
                tris.push([base + t[0], base + t[1], base + t[2]]);
                let a = poly.verts[t[0]];
                let b = poly.verts[t[1]];
                let c = poly.verts[t[2]];
                let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
                let e = setup.grid.elem_at(&centroid);
                let grads = setup.grid.shape_gradients(e, &centroid);
                // strains from the ersatz nodal field or the polygon dofs
                let ua = analysis.displacement_at(u, &a);
                let ub = analysis.displacement_at(u, &b);
                let uc = analysis.displacement_at(u, &c);
                let _ = grads;
                // linear triangle gradient of the interpolated displacement
                let det =
                    (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
                let inv = 1.0 / det;
                let dudx = inv
                    * ((ub[0] - ua[0]) * (c[1] - a[1]) - (uc[0] - ua[0]) * (b[1] - a[1]));
                let dudy = inv
                    * ((uc[0] - ua[0]) * (b[0] - a[0]) - (ub[0] - ua[0]) * (c[0] - a[0]));
                let dvdx = inv
                    * ((ub[1] - ua[1]) * (c[1] - a[1]) - (uc[1] - ua[1]) * (b[1] - a[1]));
                let dvdy = inv
                    * ((uc[1] - ua[1]) * (b[0] - a[0]) - (ub[1] - ua[1]) * (c[0] - a[0]));
                let eps = nalgebra::Vector3::new(dudx, dvdy, dudy + dvdx);
                let theta = evaluated
                    .fib
                    .theta_xy
                    .value(&[centroid[0], centroid[1], 0.0])
                    .unwrap_or(0.0);
                let cmat = material.plane.at(theta);
                let sig = cmat * eps;
                sxx.push(sig[0]);
                syy.push(sig[1]);
                sxy.push(sig[2]);
                energy.push(0.5 * eps.dot(&sig));
            }
        }
    }
    TriangleMesh {
        points,
        triangles: tris,
        point_vectors: vec![("displacement".into(), disp)],
        cell_scalars: vec![
            ("energy_density".into(), energy),
            ("stress_xx".into(), sxx),
            ("stress_yy".into(), syy),
            ("stress_xy".into(), sxy),
        ],
    }
    .write(&cfg.out_dir.join("fields").join("state.vtk"))
}

fn export_streamlines(
    cfg: &ProblemConfig,
    setup: &ProblemSetup,
    evaluated: &EvaluatedDesign,
) -> Result<(), std::io::Error> {
    if cfg.dim != 2 {
        return Ok(());
    }
    let lo = [cfg.domain_lo[0], cfg.domain_lo[1]];
    let hi = [cfg.domain_hi[0], cfg.domain_hi[1]];
    let spacing = (hi[1] - lo[1]) / 12.0;
    let opts = StreamlineOptions {
        seed_spacing: spacing,
        step: setup.grid.h().min(0.01),
        max_length: 3.0 * (hi[0] - lo[0]),
    };
    let ls = evaluated.ls.clone();
    let masked = setup.mechanics_enabled && cfg.ls_designable;
    let mask = move |x: &[f64; 2]| ls.field.value(&[x[0], x[1], 0.0]).map_or(false, |v| v < 0.0);
    let lines = trace_streamlines(
        &evaluated.fib,
        lo,
        hi,
        if masked { Some(&mask) } else { None },
        &opts,
    );
    let outline: Vec<([f64; 2], [f64; 2])> = if masked {
        extract_interface(&evaluated.ls, &setup.grid)
            .map(|m| m.segments.iter().map(|s| (s.a, s.b)).collect())
            .unwrap_or_default()
    } else {
        Vec::new()
    };
    let _ = signed_distance; // signed distance export is covered by fields
    write_streamline_svg(&cfg.out_dir.join("streamlines.svg"), lo, hi, &lines, &outline)
}
