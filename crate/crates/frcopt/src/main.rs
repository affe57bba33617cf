//! Command-line front end: `run` a preset or config file, `verify-gradients`
//! against finite differences, `trace` streamlines from an exported field
//! file. Exit codes: 0 converged, 2 max-iterations, 1 error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use frcopt::adjoint::{adjoint_gradient, evaluate_design, fd_verify, significant_indices, Term};
use frcopt::problems::config::ProblemConfig;
use frcopt::problems::run::{run_preset, run_problem, RunOverrides};
use frcopt::problems::setup::build_problem;
use frcopt::problems::streamline::{trace_streamlines, StreamlineOptions};
use frcopt::problems::svg::write_streamline_svg;
use frcopt::problems::vtk::StructuredPoints;

#[derive(Parser)]
#[command(name = "frcopt", about = "Concurrent level-set and fiber orientation optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Ersatz,
    Cutcell,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or a configuration file
    Run {
        /// preset name (par2d, par3d, gcur2d, gcur3d, short_plate,
        /// cantilever2load) or a path to a config file
        problem: String,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// use the full-scale meshes instead of the desk-scale defaults
        #[arg(long)]
        paper_scale: bool,
        /// penalty combination for the study presets (NP, MP, MLCP, MCP)
        #[arg(long)]
        case: Option<String>,
    },
    /// Check analytic design gradients against central finite differences
    VerifyGradients {
        problem: String,
        #[arg(long, default_value_t = 5)]
        samples: usize,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
        #[arg(long, value_enum)]
        backend: Option<BackendArg>,
    },
    /// Trace fiber streamlines from an exported field file into an SVG
    Trace {
        fields: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        spacing: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value = "streamlines.svg")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn overrides(
    backend: Option<BackendArg>,
    out: Option<PathBuf>,
    max_iter: Option<usize>,
    paper_scale: bool,
    case: Option<String>,
) -> RunOverrides {
    RunOverrides {
        backend: backend.map(|b| match b {
            BackendArg::Ersatz => frcopt::mechanics::Backend::Ersatz,
            BackendArg::Cutcell => frcopt::mechanics::Backend::CutCell,
        }),
        out_dir: out,
        max_iter,
        paper_scale,
        case,
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run { problem, backend, out, max_iter, paper_scale, case } => {
            let ov = overrides(backend, out, max_iter, paper_scale, case);
            let result = if std::path::Path::new(&problem).exists() {
                let mut cfg = ProblemConfig::from_file(std::path::Path::new(&problem))?;
                frcopt::problems::run::apply_overrides(&mut cfg, &ov)?;
                run_problem(&cfg)?
            } else {
                run_preset(&problem, &ov)?
            };
            println!(
                "{}: {} after {} iterations, objective {:.6e}",
                problem,
                if result.converged { "converged" } else { "max iterations" },
                result.iterations,
                result.objective
            );
            for t in frcopt::adjoint::TERMS {
                let i = t.index();
                if result.weights.weights[i] != 0.0 {
                    println!(
                        "  {:<16} raw {:.6e}  normalized {:.6e}",
                        t.name(),
                        result.values.raw[i],
                        result.normalized[i]
                    );
                }
            }
            println!("  max_kappa        {:.6e}", result.values.max_kappa);
            if let Some(g) = result.constraint {
                println!("  volume           {:.6e} (constraint {:+.3e})", result.values.volume, g);
            }
            println!("  artifacts in {}", result.out_dir.display());
            Ok(if result.converged { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::VerifyGradients { problem, samples, step, backend } => {
            let mut cfg = match frcopt::problems::presets::preset(&problem) {
                Some(c) => c,
                None => ProblemConfig::from_file(std::path::Path::new(&problem))?,
            };
            if let Some(b) = backend {
                cfg.backend = match b {
                    BackendArg::Ersatz => frcopt::mechanics::Backend::Ersatz,
                    BackendArg::Cutcell => frcopt::mechanics::Backend::CutCell,
                };
            }
            let built = build_problem(&cfg)?;
            let setup = &built.setup;
            let target = setup.regularizer.as_ref().and_then(|reg| {
                let (ls, _) = setup.unpack(&built.x0);
                reg.build_target(&ls, &setup.grid).ok()
            });
            let evaluated = evaluate_design(setup, &built.x0, target.as_ref())?;
            let weights = frcopt::adjoint::ObjectiveWeights::default();
            let report = adjoint_gradient(setup, &evaluated, &weights, target.as_ref())?;
            let mut all_ok = true;
            println!("term, samples, max_rel, median_rel, threshold, status");
            for tg in &report.terms {
                let threshold = match tg.term {
                    Term::Misalignment | Term::LocalCurvature | Term::GlobalCurvature | Term::Symmetry => 1e-6,
                    Term::StrainEnergy | Term::Perimeter | Term::Regularization => {
                        if setup.backend == frcopt::mechanics::Backend::CutCell
                            && tg.term == Term::StrainEnergy
                            && setup.layout.ls_designable
                        {
                            1e-2
                        } else {
                            1e-4
                        }
                    }
                };
                let idx = significant_indices(&tg.gradient, samples, 0, tg.gradient.len());
                if idx.is_empty() {
                    println!("{}, 0, -, -, {threshold:.0e}, skipped (zero gradient)", tg.term.name());
                    continue;
                }
                let term = tg.term;
                let fd = fd_verify(
                    |x| {
                        evaluate_design(setup, x, target.as_ref())
                            .map(|e| e.values.raw[term.index()])
                            .unwrap_or(f64::NAN)
                    },
                    &tg.gradient,
                    &built.x0,
                    &idx,
                    step,
                );
                let ok = fd.passes(threshold);
                all_ok &= ok;
                println!(
                    "{}, {}, {:.3e}, {:.3e}, {threshold:.0e}, {}",
                    tg.term.name(),
                    idx.len(),
                    fd.max_rel,
                    fd.median_rel,
                    if ok { "pass" } else { "FAIL" }
                );
            }
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Trace { fields, spacing, step, out } => {
            let sp = StructuredPoints::read(&fields)?;
            let theta = sp
                .scalar("theta_xy")
                .ok_or("field file has no theta_xy scalars")?
                .to_vec();
            let dims = sp.dims;
            if dims[2] != 1 {
                return Err("trace expects a 2D field file".into());
            }
            let lo = [sp.origin[0], sp.origin[1]];
            let hi = [
                sp.origin[0] + sp.spacing[0] * (dims[0] - 1) as f64,
                sp.origin[1] + sp.spacing[1] * (dims[1] - 1) as f64,
            ];
            // bilinear interpolation of the sampled angle field
            let sample = BilinearAngles { dims, origin: sp.origin, spacing: sp.spacing, theta };
            let opts = StreamlineOptions { seed_spacing: spacing, step, max_length: 4.0 * (hi[0] - lo[0]) };
            let lines = trace_streamlines(&sample, lo, hi, None, &opts);
            write_streamline_svg(&out, lo, hi, &lines, &[])?;
            println!("traced {} streamlines into {}", lines.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Bilinear interpolation of a nodal angle field from a structured-points
/// file (x fastest).
struct BilinearAngles {
    dims: [usize; 3],
    origin: [f64; 3],
    spacing: [f64; 3],
    theta: Vec<f64>,
}

impl frcopt::fiber::Orientation for BilinearAngles {
    fn sample(&self, x: &frcopt::bspline::Point) -> Option<frcopt::fiber::OrientationSample> {
        let nx = self.dims[0];
        let ny = self.dims[1];
        let fx = (x[0] - self.origin[0]) / self.spacing[0];
        let fy = (x[1] - self.origin[1]) / self.spacing[1];
        if fx < 0.0 || fy < 0.0 || fx > (nx - 1) as f64 || fy > (ny - 1) as f64 {
            return None;
        }
        let ix = (fx.floor() as usize).min(nx - 2);
        let iy = (fy.floor() as usize).min(ny - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let at = |i: usize, j: usize| self.theta[j * nx + i];
        let v = at(ix, iy) * (1.0 - tx) * (1.0 - ty)
            + at(ix + 1, iy) * tx * (1.0 - ty)
            + at(ix + 1, iy + 1) * tx * ty
            + at(ix, iy + 1) * (1.0 - tx) * ty;
        let gx = ((at(ix + 1, iy) - at(ix, iy)) * (1.0 - ty)
            + (at(ix + 1, iy + 1) - at(ix, iy + 1)) * ty)
            / self.spacing[0];
        let gy = ((at(ix, iy + 1) - at(ix, iy)) * (1.0 - tx)
            + (at(ix + 1, iy + 1) - at(ix + 1, iy)) * tx)
            / self.spacing[1];
        Some(frcopt::fiber::OrientationSample {
            theta_xy: v,
            grad_xy: nalgebra::Vector3::new(gx, gy, 0.0),
            theta_z: 0.0,
            grad_z: nalgebra::Vector3::zeros(),
        })
    }

    fn dim(&self) -> usize {
        2
    }
}
