//! Problem configuration: a flat key-value text format with `[section]`
//! headers, `#` comments and full validation. Unknown or missing keys are
//! reported with their line numbers; the resolved configuration echoes back
//! into `report.txt`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::homogenization::PhaseProperties;
use crate::mechanics::Backend;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("line {line}: key `{key}`: {msg}")]
    BadValue { line: usize, key: String, msg: String },
    #[error("config invariant violated: {0}")]
    Invariant(String),
    #[error("io error reading config: {0}")]
    Io(#[from] std::io::Error),
}

/// Initial level-set layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LsInit {
    /// solid everywhere
    Solid,
    /// rectangular array of circular holes
    Holes { nx: usize, ny: usize, radius: f64 },
}

/// Initial fiber angle field(s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FiberInit {
    Constant(f64),
    /// product of sines with one half-wave per unit length per dimension
    SinSin,
}

/// One Dirichlet region on the domain boundary (zero displacement).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletConfig {
    pub edge: EdgeName,
    pub range: (f64, f64),
}

/// One traction region of one load case.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadConfig {
    pub edge: EdgeName,
    pub range: (f64, f64),
    pub traction: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeName {
    Left,
    Right,
    Bottom,
    Top,
}

impl EdgeName {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "left" => Some(Self::Left),
            "right" => Some(Self::Right),
            "bottom" => Some(Self::Bottom),
            "top" => Some(Self::Top),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::Right => "right",
            Self::Bottom => "bottom",
            Self::Top => "top",
        }
    }
}

/// Circular always-solid (non-design) region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Objective weights as configured (before continuation scaling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightConfig {
    pub strain: f64,
    pub perimeter: f64,
    pub regularization: f64,
    pub misalign: f64,
    pub lcurv: f64,
    pub gcurv: f64,
    pub symmetry: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            strain: 1.0,
            perimeter: 0.0,
            regularization: 0.0,
            misalign: 0.0,
            lcurv: 0.0,
            gcurv: 0.0,
            symmetry: 0.0,
        }
    }
}

/// Continuation schedule parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    /// iteration at which fiber penalties activate and capture normalizers
    pub activation: usize,
    /// renormalization period (0 disables renormalization)
    pub renorm_period: usize,
    /// local-curvature weight growth factor and period
    pub lcurv_growth: f64,
    pub lcurv_period: usize,
    /// outer iteration before which inner iterations stay disabled when the
    /// local curvature penalty is active
    pub inner_delay: usize,
    pub max_inner: usize,
    /// relative objective-change convergence tolerance
    pub tol: f64,
    pub max_iter: usize,
    /// keep the strain-energy normalizer at its initial value during
    /// renormalization
    pub freeze_strain_normalizer: bool,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            activation: 10,
            renorm_period: 10,
            lcurv_growth: 4.0,
            lcurv_period: 20,
            inner_delay: 30,
            max_inner: 2,
            tol: 1e-5,
            max_iter: 300,
            freeze_strain_normalizer: false,
        }
    }
}

/// Fully resolved problem description.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub name: String,
    /// 2 for plane problems, 3 for fiber-fields-only problems
    pub dim: usize,
    pub domain_lo: [f64; 3],
    pub domain_hi: [f64; 3],
    pub state_mesh: [usize; 2],
    pub ls_mesh: [usize; 2],
    pub ls_degree: usize,
    pub fiber_mesh: [usize; 3],
    pub fiber_degree: usize,
    pub material: PhaseProperties,
    pub backend: Backend,
    pub c_dirichlet: f64,
    pub gamma_ghost: f64,
    pub epsilon_void: f64,
    pub mechanics_enabled: bool,
    pub ls_designable: bool,
    pub phi_bnd: f64,
    pub ls_init: LsInit,
    pub fiber_init: FiberInit,
    pub fiber_theta_z: bool,
    pub dirichlet: Vec<DirichletConfig>,
    /// outer: load cases, inner: traction regions
    pub loads: Vec<Vec<LoadConfig>>,
    pub non_design: Vec<Disc>,
    pub weights: WeightConfig,
    pub kappa_max: f64,
    pub volume_fraction: Option<f64>,
    pub schedule: ScheduleConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub checkpoint_every: usize,
}

impl ProblemConfig {
    /// Fields-only default skeleton (no mechanics, no level set design).
    pub fn fields_only(name: &str, dim: usize) -> Self {
        Self {
            name: name.to_string(),
            dim,
            domain_lo: [0.0; 3],
            domain_hi: [1.0, 1.0, 1.0],
            state_mesh: [8, 8],
            ls_mesh: [4, 4],
            ls_degree: 2,
            fiber_mesh: if dim == 3 { [8, 8, 8] } else { [8, 8, 1] },
            fiber_degree: 2,
            material: PhaseProperties {
                e_matrix: 1.03,
                e_fiber: 1.02e3,
                nu_matrix: 0.4,
                nu_fiber: 0.4,
                volume_fraction: 0.1,
                aspect_ratio: 10.0,
            },
            backend: Backend::Ersatz,
            c_dirichlet: 10.0,
            gamma_ghost: 0.01,
            epsilon_void: 1e-6,
            mechanics_enabled: false,
            ls_designable: false,
            phi_bnd: 0.25,
            ls_init: LsInit::Solid,
            fiber_init: FiberInit::SinSin,
            fiber_theta_z: dim == 3,
            dirichlet: Vec::new(),
            loads: Vec::new(),
            non_design: Vec::new(),
            weights: WeightConfig {
                strain: 0.0,
                ..Default::default()
            },
            kappa_max: 1.0,
            volume_fraction: None,
            schedule: ScheduleConfig {
                activation: 0,
                renorm_period: 0,
                ..Default::default()
            },
            seed: 0,
            out_dir: PathBuf::from("out"),
            checkpoint_every: 50,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: &str| Err(ConfigError::Invariant(m.to_string()));
        if self.dim != 2 && self.dim != 3 {
            return err("dim must be 2 or 3");
        }
        for d in 0..self.dim {
            if !(self.domain_lo[d] < self.domain_hi[d]) {
                return err("domain bounds must satisfy lo < hi");
            }
        }
        if self.state_mesh[0] == 0 || self.state_mesh[1] == 0 {
            return err("state mesh resolutions must be positive");
        }
        if !(self.kappa_max > 0.0) {
            return err("kappa_max must be positive");
        }
        if !(self.phi_bnd > 0.0) {
            return err("phi_bnd must be positive");
        }
        if let Some(f) = self.volume_fraction {
            if !(0.0 < f && f <= 1.0) {
                return err("volume fraction must lie in (0, 1]");
            }
        }
        if self.mechanics_enabled && self.dim != 2 {
            return err("mechanics is 2D only; 3D problems are fiber-fields only");
        }
        if self.mechanics_enabled && self.dirichlet.is_empty() {
            return err("mechanics needs at least one Dirichlet region");
        }
        self.material.validate().map_err(|e| ConfigError::Invariant(e.to_string()))?;
        for disc in &self.non_design {
            for d in 0..2 {
                if disc.center[d] < self.domain_lo[d] - disc.radius
                    || disc.center[d] > self.domain_hi[d] + disc.radius
                {
                    return err("non-design region outside the domain");
                }
            }
        }
        Ok(())
    }

    /// Warnings that do not block the run.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.mechanics_enabled
            && (self.fiber_mesh[0] > self.state_mesh[0] || self.fiber_mesh[1] > self.state_mesh[1])
        {
            out.push("fiber mesh finer than state mesh; design fields are usually coarser".into());
        }
        out
    }

    /// Serializes the resolved configuration (the echo in `report.txt`).
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let dims = self.dim;
        s.push_str(&format!("[problem]\nname = {}\ndim = {}\n", self.name, dims));
        s.push_str(&format!(
            "domain_lo ={}\ndomain_hi ={}\n",
            join_f(&self.domain_lo[..dims]),
            join_f(&self.domain_hi[..dims])
        ));
        s.push_str("\n[mesh]\n");
        s.push_str(&format!("state = {} {}\n", self.state_mesh[0], self.state_mesh[1]));
        s.push_str(&format!(
            "levelset = {} {}\nlevelset_degree = {}\n",
            self.ls_mesh[0], self.ls_mesh[1], self.ls_degree
        ));
        s.push_str(&format!(
            "fiber ={}\nfiber_degree = {}\n",
            join_u(&self.fiber_mesh[..dims]),
            self.fiber_degree
        ));
        s.push_str("\n[material]\n");
        let m = &self.material;
        s.push_str(&format!(
            "e_matrix = {}\ne_fiber = {}\nnu_matrix = {}\nnu_fiber = {}\nvolume_fraction = {}\naspect_ratio = {}\n",
            m.e_matrix, m.e_fiber, m.nu_matrix, m.nu_fiber, m.volume_fraction, m.aspect_ratio
        ));
        s.push_str("\n[mechanics]\n");
        s.push_str(&format!(
            "enabled = {}\nbackend = {}\nc_dirichlet = {}\ngamma_ghost = {}\nepsilon_void = {}\n",
            self.mechanics_enabled,
            match self.backend {
                Backend::Ersatz => "ersatz",
                Backend::CutCell => "cutcell",
            },
            self.c_dirichlet,
            self.gamma_ghost,
            self.epsilon_void
        ));
        s.push_str("\n[levelset]\n");
        s.push_str(&format!("designable = {}\nphi_bnd = {}\n", self.ls_designable, self.phi_bnd));
        match self.ls_init {
            LsInit::Solid => s.push_str("initial = solid\n"),
            LsInit::Holes { nx, ny, radius } => {
                s.push_str(&format!("initial = holes\nholes_grid = {nx} {ny}\nholes_radius = {radius}\n"))
            }
        }
        s.push_str("\n[fiber]\n");
        match self.fiber_init {
            FiberInit::Constant(a) => s.push_str(&format!("initial = constant\ninitial_angle = {a}\n")),
            FiberInit::SinSin => s.push_str("initial = sinsin\n"),
        }
        s.push_str(&format!("theta_z = {}\n", self.fiber_theta_z));
        s.push_str("\n[dirichlet]\n");
        for (i, d) in self.dirichlet.iter().enumerate() {
            s.push_str(&format!("d{}.region = {} {} {}\n", i + 1, d.edge.name(), d.range.0, d.range.1));
        }
        s.push_str("\n[loads]\n");
        for (ci, case) in self.loads.iter().enumerate() {
            for (ri, l) in case.iter().enumerate() {
                s.push_str(&format!(
                    "case{}.r{}.region = {} {} {}\ncase{}.r{}.traction = {} {}\n",
                    ci + 1,
                    ri + 1,
                    l.edge.name(),
                    l.range.0,
                    l.range.1,
                    ci + 1,
                    ri + 1,
                    l.traction[0],
                    l.traction[1]
                ));
            }
        }
        s.push_str("\n[non_design]\n");
        for (i, d) in self.non_design.iter().enumerate() {
            s.push_str(&format!("disc{}.center = {} {}\ndisc{}.radius = {}\n", i + 1, d.center[0], d.center[1], i + 1, d.radius));
        }
        s.push_str("\n[objective]\n");
        let w = &self.weights;
        s.push_str(&format!(
            "w_strain = {}\nw_perimeter = {}\nw_regularization = {}\nw_misalign = {}\nw_lcurv = {}\nw_gcurv = {}\nw_symmetry = {}\n",
            w.strain, w.perimeter, w.regularization, w.misalign, w.lcurv, w.gcurv, w.symmetry
        ));
        s.push_str(&format!("kappa_max = {}\n", self.kappa_max));
        match self.volume_fraction {
            Some(f) => s.push_str(&format!("volume_fraction_max = {f}\n")),
            None => s.push_str("volume_fraction_max = none\n"),
        }
        s.push_str("\n[schedule]\n");
        let c = &self.schedule;
        s.push_str(&format!(
            "activation = {}\nrenorm_period = {}\nlcurv_growth = {}\nlcurv_period = {}\ninner_delay = {}\nmax_inner = {}\ntol = {:e}\nmax_iter = {}\nfreeze_strain_normalizer = {}\n",
            c.activation,
            c.renorm_period,
            c.lcurv_growth,
            c.lcurv_period,
            c.inner_delay,
            c.max_inner,
            c.tol,
            c.max_iter,
            c.freeze_strain_normalizer
        ));
        s.push_str("\n[run]\n");
        s.push_str(&format!(
            "seed = {}\nout = {}\ncheckpoint_every = {}\n",
            self.seed,
            self.out_dir.display(),
            self.checkpoint_every
        ));
        s
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let entries = parse_entries(text)?;
        build_config(entries)
    }
}

fn join_f(v: &[f64]) -> String {
    v.iter().map(|x| format!(" {x}")).collect()
}

fn join_u(v: &[usize]) -> String {
    v.iter().map(|x| format!(" {x}")).collect()
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

type Entries = BTreeMap<String, Entry>;

fn parse_entries(text: &str) -> Result<Entries, ConfigError> {
    let mut out: Entries = BTreeMap::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let stripped = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(name) = stripped.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(ConfigError::BadValue {
                line,
                key: stripped.to_string(),
                msg: "expected `key = value`".into(),
            });
        };
        let full = if section.is_empty() {
            key.trim().to_string()
        } else {
            format!("{section}.{}", key.trim())
        };
        out.insert(full, Entry { value: value.trim().to_string(), line, used: false });
    }
    Ok(out)
}

struct Reader {
    entries: Entries,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn f64(&mut self, key: &str, default: Option<f64>) -> Result<f64, ConfigError> {
        match self.take(key) {
            Some((v, line)) => v.parse().map_err(|_| ConfigError::BadValue {
                line,
                key: key.into(),
                msg: "expected a number".into(),
            }),
            None => default.ok_or_else(|| ConfigError::MissingKey(key.into())),
        }
    }

    fn usize(&mut self, key: &str, default: Option<usize>) -> Result<usize, ConfigError> {
        match self.take(key) {
            Some((v, line)) => v.parse().map_err(|_| ConfigError::BadValue {
                line,
                key: key.into(),
                msg: "expected a non-negative integer".into(),
            }),
            None => default.ok_or_else(|| ConfigError::MissingKey(key.into())),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(key) {
            Some((v, line)) => match v.as_str() {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(ConfigError::BadValue { line, key: key.into(), msg: "expected a boolean".into() }),
            },
            None => Ok(default),
        }
    }

    fn string(&mut self, key: &str, default: Option<&str>) -> Result<String, ConfigError> {
        match self.take(key) {
            Some((v, _)) => Ok(v),
            None => default.map(|s| s.to_string()).ok_or_else(|| ConfigError::MissingKey(key.into())),
        }
    }

    fn numbers(&mut self, key: &str) -> Result<Option<(Vec<f64>, usize)>, ConfigError> {
        match self.take(key) {
            Some((v, line)) => {
                let parsed: Result<Vec<f64>, _> = v.split_whitespace().map(|t| t.parse()).collect();
                match parsed {
                    Ok(nums) => Ok(Some((nums, line))),
                    Err(_) => Err(ConfigError::BadValue {
                        line,
                        key: key.into(),
                        msg: "expected whitespace-separated numbers".into(),
                    }),
                }
            }
            None => Ok(None),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        for (key, e) in self.entries {
            if !e.used {
                return Err(ConfigError::UnknownKey { line: e.line, key });
            }
        }
        Ok(())
    }
}

fn build_config(entries: Entries) -> Result<ProblemConfig, ConfigError> {
    let mut r = Reader { entries };
    let dim = r.usize("problem.dim", Some(2))?;
    let name = r.string("problem.name", Some("custom"))?;
    let mut cfg = ProblemConfig::fields_only(&name, dim);

    if let Some((v, line)) = r.numbers("problem.domain_lo")? {
        if v.len() != dim {
            return Err(ConfigError::BadValue {
                line,
                key: "problem.domain_lo".into(),
                msg: format!("expected {dim} numbers"),
            });
        }
        for (d, x) in v.iter().enumerate() {
            cfg.domain_lo[d] = *x;
        }
    }
    if let Some((v, line)) = r.numbers("problem.domain_hi")? {
        if v.len() != dim {
            return Err(ConfigError::BadValue {
                line,
                key: "problem.domain_hi".into(),
                msg: format!("expected {dim} numbers"),
            });
        }
        for (d, x) in v.iter().enumerate() {
            cfg.domain_hi[d] = *x;
        }
    }
    if let Some((v, line)) = r.numbers("mesh.state")? {
        if v.len() != 2 {
            return Err(ConfigError::BadValue { line, key: "mesh.state".into(), msg: "expected 2 numbers".into() });
        }
        cfg.state_mesh = [v[0] as usize, v[1] as usize];
    }
    if let Some((v, line)) = r.numbers("mesh.levelset")? {
        if v.len() != 2 {
            return Err(ConfigError::BadValue { line, key: "mesh.levelset".into(), msg: "expected 2 numbers".into() });
        }
        cfg.ls_mesh = [v[0] as usize, v[1] as usize];
    }
    cfg.ls_degree = r.usize("mesh.levelset_degree", Some(cfg.ls_degree))?;
    if let Some((v, line)) = r.numbers("mesh.fiber")? {
        if v.len() != dim {
            return Err(ConfigError::BadValue { line, key: "mesh.fiber".into(), msg: format!("expected {dim} numbers") });
        }
        for (d, x) in v.iter().enumerate() {
            cfg.fiber_mesh[d] = *x as usize;
        }
    }
    cfg.fiber_degree = r.usize("mesh.fiber_degree", Some(cfg.fiber_degree))?;
    for d in dim..3 {
        cfg.fiber_mesh[d] = 1;
        cfg.domain_lo[d] = 0.0;
        cfg.domain_hi[d] = 1.0;
    }

    cfg.material.e_matrix = r.f64("material.e_matrix", Some(cfg.material.e_matrix))?;
    cfg.material.e_fiber = r.f64("material.e_fiber", Some(cfg.material.e_fiber))?;
    cfg.material.nu_matrix = r.f64("material.nu_matrix", Some(cfg.material.nu_matrix))?;
    cfg.material.nu_fiber = r.f64("material.nu_fiber", Some(cfg.material.nu_fiber))?;
    cfg.material.volume_fraction = r.f64("material.volume_fraction", Some(cfg.material.volume_fraction))?;
    cfg.material.aspect_ratio = r.f64("material.aspect_ratio", Some(cfg.material.aspect_ratio))?;

    cfg.mechanics_enabled = r.bool("mechanics.enabled", cfg.mechanics_enabled)?;
    let backend = r.string("mechanics.backend", Some("ersatz"))?;
    cfg.backend = match backend.as_str() {
        "ersatz" => Backend::Ersatz,
        "cutcell" => Backend::CutCell,
        other => {
            return Err(ConfigError::Invariant(format!("unknown backend `{other}`")));
        }
    };
    cfg.c_dirichlet = r.f64("mechanics.c_dirichlet", Some(cfg.c_dirichlet))?;
    cfg.gamma_ghost = r.f64("mechanics.gamma_ghost", Some(cfg.gamma_ghost))?;
    cfg.epsilon_void = r.f64("mechanics.epsilon_void", Some(cfg.epsilon_void))?;

    cfg.ls_designable = r.bool("levelset.designable", cfg.ls_designable)?;
    cfg.phi_bnd = r.f64("levelset.phi_bnd", Some(cfg.phi_bnd))?;
    let ls_init = r.string("levelset.initial", Some("solid"))?;
    cfg.ls_init = match ls_init.as_str() {
        "solid" => LsInit::Solid,
        "holes" => {
            let grid = r
                .numbers("levelset.holes_grid")?
                .ok_or_else(|| ConfigError::MissingKey("levelset.holes_grid".into()))?;
            let radius = r.f64("levelset.holes_radius", None)?;
            LsInit::Holes { nx: grid.0[0] as usize, ny: grid.0[1] as usize, radius }
        }
        other => return Err(ConfigError::Invariant(format!("unknown levelset initial `{other}`"))),
    };

    let fiber_init = r.string("fiber.initial", Some("constant"))?;
    cfg.fiber_init = match fiber_init.as_str() {
        "constant" => FiberInit::Constant(r.f64("fiber.initial_angle", Some(0.0))?),
        "sinsin" => FiberInit::SinSin,
        other => return Err(ConfigError::Invariant(format!("unknown fiber initial `{other}`"))),
    };
    cfg.fiber_theta_z = r.bool("fiber.theta_z", dim == 3)?;

    // numbered regions
    cfg.dirichlet.clear();
    for i in 1..100 {
        let key = format!("dirichlet.d{i}.region");
        let Some((v, line)) = r.take(&key) else { break };
        cfg.dirichlet.push(parse_region(&v, line, &key)?);
    }
    cfg.loads.clear();
    for ci in 1..100 {
        let mut case = Vec::new();
        for ri in 1..100 {
            let key = format!("loads.case{ci}.r{ri}.region");
            let Some((v, line)) = r.take(&key) else { break };
            let region = parse_region(&v, line, &key)?;
            let tkey = format!("loads.case{ci}.r{ri}.traction");
            let (t, tline) =
                r.numbers(&tkey)?.ok_or_else(|| ConfigError::MissingKey(tkey.clone()))?;
            if t.len() != 2 {
                return Err(ConfigError::BadValue { line: tline, key: tkey, msg: "expected 2 numbers".into() });
            }
            case.push(LoadConfig { edge: region.edge, range: region.range, traction: [t[0], t[1]] });
        }
        if case.is_empty() {
            break;
        }
        cfg.loads.push(case);
    }
    cfg.non_design.clear();
    for i in 1..100 {
        let key = format!("non_design.disc{i}.center");
        let Some((c, _)) = r.numbers(&key)? else { break };
        let radius = r.f64(&format!("non_design.disc{i}.radius"), None)?;
        cfg.non_design.push(Disc { center: [c[0], c[1]], radius });
    }

    cfg.weights.strain = r.f64("objective.w_strain", Some(cfg.weights.strain))?;
    cfg.weights.perimeter = r.f64("objective.w_perimeter", Some(cfg.weights.perimeter))?;
    cfg.weights.regularization = r.f64("objective.w_regularization", Some(cfg.weights.regularization))?;
    cfg.weights.misalign = r.f64("objective.w_misalign", Some(cfg.weights.misalign))?;
    cfg.weights.lcurv = r.f64("objective.w_lcurv", Some(cfg.weights.lcurv))?;
    cfg.weights.gcurv = r.f64("objective.w_gcurv", Some(cfg.weights.gcurv))?;
    cfg.weights.symmetry = r.f64("objective.w_symmetry", Some(cfg.weights.symmetry))?;
    cfg.kappa_max = r.f64("objective.kappa_max", Some(cfg.kappa_max))?;
    let vf = r.string("objective.volume_fraction_max", Some("none"))?;
    cfg.volume_fraction = if vf == "none" {
        None
    } else {
        Some(vf.parse().map_err(|_| ConfigError::Invariant("bad volume_fraction_max".into()))?)
    };

    cfg.schedule.activation = r.usize("schedule.activation", Some(cfg.schedule.activation))?;
    cfg.schedule.renorm_period = r.usize("schedule.renorm_period", Some(cfg.schedule.renorm_period))?;
    cfg.schedule.lcurv_growth = r.f64("schedule.lcurv_growth", Some(cfg.schedule.lcurv_growth))?;
    cfg.schedule.lcurv_period = r.usize("schedule.lcurv_period", Some(cfg.schedule.lcurv_period))?;
    cfg.schedule.inner_delay = r.usize("schedule.inner_delay", Some(cfg.schedule.inner_delay))?;
    cfg.schedule.max_inner = r.usize("schedule.max_inner", Some(cfg.schedule.max_inner))?;
    cfg.schedule.tol = r.f64("schedule.tol", Some(cfg.schedule.tol))?;
    cfg.schedule.max_iter = r.usize("schedule.max_iter", Some(cfg.schedule.max_iter))?;
    cfg.schedule.freeze_strain_normalizer =
        r.bool("schedule.freeze_strain_normalizer", cfg.schedule.freeze_strain_normalizer)?;

    cfg.seed = r.usize("run.seed", Some(0))? as u64;
    cfg.out_dir = PathBuf::from(r.string("run.out", Some("out"))?);
    cfg.checkpoint_every = r.usize("run.checkpoint_every", Some(50))?;

    r.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

fn parse_region(v: &str, line: usize, key: &str) -> Result<DirichletConfig, ConfigError> {
    let parts: Vec<&str> = v.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(ConfigError::BadValue {
            line,
            key: key.into(),
            msg: "expected `edge lo hi`".into(),
        });
    }
    let edge = EdgeName::parse(parts[0]).ok_or_else(|| ConfigError::BadValue {
        line,
        key: key.into(),
        msg: format!("unknown edge `{}`", parts[0]),
    })?;
    let lo: f64 = parts[1].parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.into(),
        msg: "bad range".into(),
    })?;
    let hi: f64 = parts[2].parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.into(),
        msg: "bad range".into(),
    })?;
    Ok(DirichletConfig { edge, range: (lo, hi) })
}
