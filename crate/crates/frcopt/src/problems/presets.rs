//! Built-in problem presets at desk scale, with a flag for the full-scale
//! meshes.

use std::path::PathBuf;

use super::config::{
    Disc, DirichletConfig, EdgeName, FiberInit, LoadConfig, LsInit, ProblemConfig, ScheduleConfig,
    WeightConfig,
};
use crate::mechanics::Backend;

pub const PRESET_NAMES: [&str; 6] =
    ["par2d", "par3d", "gcur2d", "gcur3d", "short_plate", "cantilever2load"];

/// Builds a preset by name.
pub fn preset(name: &str) -> Option<ProblemConfig> {
    match name {
        "par2d" => Some(par2d()),
        "par3d" => Some(par3d()),
        "gcur2d" => Some(gcur2d()),
        "gcur3d" => Some(gcur3d()),
        "short_plate" => Some(short_plate()),
        "cantilever2load" => Some(cantilever2load()),
        _ => None,
    }
}

/// Penalty-only alignment problem on the plate domain: minimize the
/// misalignment penalty from the sine-product initial field.
pub fn par2d() -> ProblemConfig {
    let mut cfg = ProblemConfig::fields_only("par2d", 2);
    cfg.domain_lo = [0.0, 0.0, 0.0];
    cfg.domain_hi = [4.0, 1.0, 1.0];
    cfg.fiber_mesh = [64, 16, 1];
    cfg.fiber_degree = 2;
    cfg.fiber_init = FiberInit::SinSin;
    cfg.weights = WeightConfig {
        strain: 0.0,
        misalign: 1.0,
        ..Default::default()
    };
    cfg.schedule = ScheduleConfig {
        activation: 0,
        renorm_period: 0,
        max_iter: 1200,
        ..Default::default()
    };
    cfg.out_dir = PathBuf::from("out/par2d");
    cfg
}

/// 3D variant with both angle fields.
pub fn par3d() -> ProblemConfig {
    let mut cfg = par2d();
    cfg.name = "par3d".into();
    cfg.dim = 3;
    cfg.domain_hi = [1.0, 1.0, 1.0];
    cfg.fiber_mesh = [8, 8, 8];
    cfg.fiber_theta_z = true;
    cfg.schedule.max_iter = 500;
    cfg.out_dir = PathBuf::from("out/par3d");
    cfg
}

/// Penalty-only smoothing problem: minimize the global curvature penalty.
pub fn gcur2d() -> ProblemConfig {
    let mut cfg = par2d();
    cfg.name = "gcur2d".into();
    cfg.weights = WeightConfig {
        strain: 0.0,
        gcurv: 1.0,
        ..Default::default()
    };
    cfg.out_dir = PathBuf::from("out/gcur2d");
    cfg
}

pub fn gcur3d() -> ProblemConfig {
    let mut cfg = par3d();
    cfg.name = "gcur3d".into();
    cfg.weights = WeightConfig {
        strain: 0.0,
        gcurv: 1.0,
        ..Default::default()
    };
    cfg.out_dir = PathBuf::from("out/gcur3d");
    cfg
}

/// Short plate under shear: fixed solid rectangle, fiber orientation as the
/// only design field, tangential traction along the top edge. Desk-scale
/// meshes (half the full resolution per dimension).
pub fn short_plate() -> ProblemConfig {
    let mut cfg = ProblemConfig::fields_only("short_plate", 2);
    cfg.domain_lo = [0.0, 0.0, 0.0];
    cfg.domain_hi = [4.0, 1.0, 1.0];
    cfg.state_mesh = [128, 32];
    cfg.ls_mesh = [32, 8];
    cfg.fiber_mesh = [32, 8, 1];
    cfg.fiber_degree = 2;
    cfg.mechanics_enabled = true;
    cfg.backend = Backend::Ersatz;
    cfg.ls_designable = false;
    cfg.ls_init = LsInit::Solid;
    cfg.phi_bnd = 0.25;
    cfg.fiber_init = FiberInit::Constant(std::f64::consts::FRAC_PI_2); // vertical
    cfg.dirichlet = vec![DirichletConfig { edge: EdgeName::Bottom, range: (0.0, 4.0) }];
    cfg.loads = vec![vec![LoadConfig {
        edge: EdgeName::Top,
        range: (0.0, 4.0),
        traction: [0.01, 0.0],
    }]];
    cfg.weights = WeightConfig {
        strain: 1.0,
        ..Default::default()
    };
    cfg.kappa_max = 1.0;
    cfg.schedule = ScheduleConfig {
        max_iter: 250,
        ..Default::default()
    };
    cfg.out_dir = PathBuf::from("out/short_plate");
    cfg
}

/// Cantilever under two alternating loads: concurrent level-set and fiber
/// optimization with a 50% volume constraint. Desk-scale meshes.
pub fn cantilever2load() -> ProblemConfig {
    let mut cfg = ProblemConfig::fields_only("cantilever2load", 2);
    cfg.domain_lo = [0.0, 0.0, 0.0];
    cfg.domain_hi = [2.0, 1.0, 1.0];
    cfg.state_mesh = [128, 64];
    cfg.ls_mesh = [32, 16];
    cfg.ls_degree = 2;
    cfg.fiber_mesh = [32, 16, 1];
    cfg.fiber_degree = 2;
    cfg.mechanics_enabled = true;
    cfg.backend = Backend::Ersatz;
    cfg.ls_designable = true;
    cfg.phi_bnd = 0.2;
    cfg.ls_init = LsInit::Holes { nx: 7, ny: 3, radius: 0.12 };
    cfg.fiber_init = FiberInit::Constant(0.0); // horizontal
    cfg.dirichlet = vec![DirichletConfig { edge: EdgeName::Left, range: (0.0, 1.0) }];
    cfg.loads = vec![
        vec![LoadConfig { edge: EdgeName::Right, range: (0.8, 1.0), traction: [0.0, -0.1] }],
        vec![LoadConfig { edge: EdgeName::Right, range: (0.0, 0.2), traction: [0.0, 0.125] }],
    ];
    cfg.non_design = vec![
        Disc { center: [2.0, 0.9], radius: 0.1 },
        Disc { center: [2.0, 0.1], radius: 0.1 },
    ];
    cfg.weights = WeightConfig {
        strain: 1.0,
        perimeter: 0.01,
        regularization: 0.01,
        misalign: 0.05,
        ..Default::default()
    };
    cfg.kappa_max = 10.0;
    cfg.volume_fraction = Some(0.5);
    cfg.schedule = ScheduleConfig {
        max_iter: 250,
        ..Default::default()
    };
    cfg.out_dir = PathBuf::from("out/cantilever2load");
    cfg
}

/// Named penalty combinations of the plate and cantilever studies.
pub fn apply_case(cfg: &mut ProblemConfig, case: &str) -> Result<(), String> {
    match case {
        "NP" => {
            cfg.weights.misalign = 0.0;
            cfg.weights.lcurv = 0.0;
            cfg.weights.gcurv = 0.0;
        }
        "MP" => {
            cfg.weights.misalign = 0.05;
            cfg.weights.lcurv = 0.0;
            cfg.weights.gcurv = 0.0;
        }
        "MLCP" => {
            cfg.weights.misalign = 0.05;
            cfg.weights.lcurv = 0.1;
            cfg.weights.gcurv = 0.0;
        }
        "MCP" => {
            cfg.weights.misalign = 0.05;
            cfg.weights.lcurv = 0.1;
            cfg.weights.gcurv = 0.01;
        }
        other => return Err(format!("unknown case `{other}` (expected NP, MP, MLCP or MCP)")),
    }
    cfg.name = format!("{}_{}", cfg.name, case.to_lowercase());
    Ok(())
}

/// Doubles the mesh resolutions to the full-scale setup.
pub fn apply_paper_scale(cfg: &mut ProblemConfig) {
    cfg.state_mesh = [cfg.state_mesh[0] * 2, cfg.state_mesh[1] * 2];
    cfg.ls_mesh = [cfg.ls_mesh[0] * 2, cfg.ls_mesh[1] * 2];
    for d in 0..cfg.dim {
        cfg.fiber_mesh[d] *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_validate() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn golden_preset_parameters() {
        // parameter fidelity against the documented study settings
        let sp = short_plate();
        assert_eq!(sp.state_mesh, [128, 32]);
        assert_eq!(sp.fiber_mesh[..2], [32, 8]);
        assert_eq!(sp.fiber_degree, 2);
        assert_eq!(sp.kappa_max, 1.0);
        assert_eq!(sp.loads[0][0].traction, [0.01, 0.0]);
        assert_eq!(sp.c_dirichlet, 10.0);
        assert_eq!(sp.gamma_ghost, 0.01);
        assert_eq!(sp.schedule.activation, 10);
        assert_eq!(sp.schedule.renorm_period, 10);
        assert_eq!(sp.schedule.lcurv_growth, 4.0);
        assert_eq!(sp.schedule.lcurv_period, 20);
        assert_eq!(sp.schedule.tol, 1e-5);

        let ca = cantilever2load();
        assert_eq!(ca.volume_fraction, Some(0.5));
        assert_eq!(ca.kappa_max, 10.0);
        match ca.ls_init {
            LsInit::Holes { nx, ny, radius } => {
                assert_eq!((nx, ny), (7, 3));
                assert!((radius - 0.12).abs() < 1e-12);
            }
            _ => panic!("cantilever starts from a hole grid"),
        }
        assert_eq!(ca.loads.len(), 2);
        assert!((ca.loads[0][0].traction[1] + 0.1).abs() < 1e-12);
        assert!((ca.loads[1][0].traction[1] - 0.125).abs() < 1e-12);
        assert_eq!(ca.weights.misalign, 0.05);

        let p2 = par2d();
        assert_eq!(p2.fiber_mesh[..2], [64, 16]);
        let mut mlcp = short_plate();
        apply_case(&mut mlcp, "MLCP").unwrap();
        assert_eq!(mlcp.weights.lcurv, 0.1);
        assert_eq!(mlcp.weights.misalign, 0.05);
    }

    #[test]
    fn paper_scale_doubles_meshes() {
        let mut cfg = short_plate();
        apply_paper_scale(&mut cfg);
        assert_eq!(cfg.state_mesh, [256, 64]);
        assert_eq!(cfg.fiber_mesh[..2], [64, 16]);
    }
}
