//! Experiment configuration, read from TOML.
//!
//! ```toml
//! output_dir = "out"
//! strategies = ["uniform", "potential", "surrogate_hybrid"]
//!
//! [grid]
//! nx = 256
//! ny = 128
//! lx = 8.0
//! ly = 4.0
//!
//! [shape]
//! kind = "rectangle"
//! cx = 2.0
//! cy = 2.03125
//! width = 0.5
//! height = 0.5
//!
//! [freestream]
//! u_inf = 38.889
//! nu = 0.12963
//!
//! [solver]
//! dt = 1.8e-4
//! t_end = 2.0
//! ```
//!
//! Every other section and key is optional. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::{FreestreamConditions, GridSpec, ShapeSpec, DEFAULT_CELL_CAP};
use crate::idw::IdwParams;
use crate::init::{BlendParams, ExtensionParams, InitStrategy, SurrogateSource};
use crate::solver::SolverConfig;
use crate::surrogate::ProxyOptions;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: PathBuf,
    strategies: Vec<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    parallel: bool,
    #[serde(default)]
    snapshot_times: Vec<f64>,
    grid: RawGrid,
    shape: RawShape,
    freestream: RawFreestream,
    solver: RawSolver,
    #[serde(default)]
    blend: RawBlend,
    #[serde(default)]
    surrogate: RawSurrogate,
    #[serde(default)]
    idw: RawIdw,
    #[serde(default)]
    prior: RawPrior,
    #[serde(default)]
    convergence: RawConvergence,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    nx: i64,
    ny: i64,
    lx: f64,
    ly: f64,
    cell_cap: Option<i64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawShape {
    kind: String,
    cx: f64,
    cy: f64,
    width: Option<f64>,
    height: Option<f64>,
    radius: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFreestream {
    u_inf: f64,
    #[serde(default = "default_rho")]
    rho: f64,
    nu: f64,
    #[serde(default = "default_k_inf")]
    k_inf: f64,
    l0: Option<f64>,
}

fn default_rho() -> f64 {
    1.225
}

fn default_k_inf() -> f64 {
    0.24
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    dt: f64,
    t_end: f64,
    cfl_limit: Option<f64>,
    poisson_tol: Option<f64>,
    n_correctors: Option<i64>,
    sample_every: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlend {
    k_lower: Option<f64>,
    k_upper: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSurrogate {
    path: Option<PathBuf>,
    factor: Option<i64>,
    horizon_ctu: Option<f64>,
    cfl: Option<f64>,
    k_coeff: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIdw {
    power: Option<f64>,
    k: Option<i64>,
    eps: Option<f64>,
    seed_spacing: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    path: Option<PathBuf>,
    drop_k: Option<bool>,
    t_end: Option<f64>,
    dt: Option<f64>,
    state: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConvergence {
    tol: Option<f64>,
}

/// Which state of the precursor run becomes the prior solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorState {
    Final,
    Average,
}

/// Where the prior solution comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum PriorSource {
    File(PathBuf),
    /// Run the case from uniform flow first and keep the chosen state.
    Precursor { t_end: f64, dt: f64, state: PriorState },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub shape: ShapeSpec,
    pub freestream: FreestreamConditions,
    pub solver: SolverConfig,
    pub strategies: Vec<InitStrategy>,
    pub blend: BlendParams,
    pub extension: ExtensionParams,
    pub surrogate: SurrogateSource,
    pub prior: PriorSource,
    pub tol: f64,
    pub output_dir: PathBuf,
    pub snapshot_times: Vec<f64>,
    pub parallel: bool,
    /// Reserved; runs are deterministic.
    pub seed: u64,
}

fn field_err(field: &str, msg: impl Into<String>) -> Error {
    Error::ConfigField {
        field: field.to_string(),
        msg: msg.into(),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, column)
}

fn map_toml_error(text: &str, e: toml::de::Error) -> Error {
    let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
    let msg = e.message().to_string();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(key) = rest.split('`').next() {
            return Error::UnknownKey {
                key: key.to_string(),
                line,
            };
        }
    }
    Error::ConfigSyntax { line, column, msg }
}

fn positive_count(field: &str, v: i64, min: i64) -> Result<usize> {
    if v < min {
        return Err(field_err(field, format!("must be an integer >= {min} (got {v})")));
    }
    Ok(v as usize)
}

/// Parses and validates a configuration. Relative paths are kept as given.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| map_toml_error(text, e))?;

    let nx = positive_count("grid.nx", raw.grid.nx, 8)
        .map_err(|_| field_err("grid.nx", format!("GridSpec requires nx >= 8 (got {})", raw.grid.nx)))?;
    let ny = positive_count("grid.ny", raw.grid.ny, 8)
        .map_err(|_| field_err("grid.ny", format!("GridSpec requires ny >= 8 (got {})", raw.grid.ny)))?;
    let cell_cap = match raw.grid.cell_cap {
        Some(c) => positive_count("grid.cell_cap", c, 64)?,
        None => DEFAULT_CELL_CAP,
    };
    let grid = GridSpec {
        nx,
        ny,
        lx: raw.grid.lx,
        ly: raw.grid.ly,
        cell_cap,
    };
    grid.validate().map_err(|e| field_err("grid", e.to_string()))?;

    let s = &raw.shape;
    let shape = match s.kind.as_str() {
        "rectangle" | "square" => {
            let width = s.width.ok_or_else(|| field_err("shape.width", "required for a rectangle"))?;
            let height = match s.kind.as_str() {
                "square" => s.height.unwrap_or(width),
                _ => s.height.ok_or_else(|| field_err("shape.height", "required for a rectangle"))?,
            };
            if !(width > 0.0 && height > 0.0) {
                return Err(field_err("shape", "width and height must be positive"));
            }
            ShapeSpec::Rectangle {
                cx: s.cx,
                cy: s.cy,
                width,
                height,
            }
        }
        "circle" => {
            let radius = s.radius.ok_or_else(|| field_err("shape.radius", "required for a circle"))?;
            if !(radius > 0.0) {
                return Err(field_err("shape.radius", "must be positive"));
            }
            ShapeSpec::Circle { cx: s.cx, cy: s.cy, radius }
        }
        other => return Err(field_err("shape.kind", format!("expected rectangle, square or circle (got {other})"))),
    };
    let (x0, y0, x1, y1) = shape.extents();
    let l0_default = (x1 - x0).max(y1 - y0);

    let f = &raw.freestream;
    let freestream = FreestreamConditions::new(f.u_inf, f.rho, f.nu, f.k_inf, f.l0.unwrap_or(l0_default))
        .map_err(|e| field_err("freestream", e.to_string()))?;

    let r = &raw.solver;
    let mut solver = SolverConfig::new(r.dt, r.t_end);
    if let Some(v) = r.cfl_limit {
        solver.cfl_limit = v;
    }
    if let Some(v) = r.poisson_tol {
        solver.poisson_tol = v;
    }
    if let Some(v) = r.n_correctors {
        solver.n_correctors = positive_count("solver.n_correctors", v, 1)?;
    }
    if let Some(v) = r.sample_every {
        solver.sample_every = positive_count("solver.sample_every", v, 1)?;
    }
    solver.validate().map_err(|e| field_err("solver", e.to_string()))?;

    let mut blend = BlendParams::from_k_inf(freestream.k_inf);
    if let Some(v) = raw.blend.k_lower {
        blend.k_lower = v;
    }
    if let Some(v) = raw.blend.k_upper {
        blend.k_upper = v;
    }

    let mut idw = IdwParams::for_diagonal((grid.lx * grid.lx + grid.ly * grid.ly).sqrt());
    if let Some(v) = raw.idw.power {
        idw.power = v;
    }
    if let Some(v) = raw.idw.k {
        idw.k = positive_count("idw.k", v, 1)?;
    }
    if let Some(v) = raw.idw.eps {
        idw.eps = v;
    }
    let seed_spacing = match raw.idw.seed_spacing {
        Some(v) => positive_count("idw.seed_spacing", v, 1)?,
        None => 4,
    };
    let extension = ExtensionParams { idw, seed_spacing };
    extension.validate().map_err(|e| field_err("idw", e.to_string()))?;

    let rs = &raw.surrogate;
    let surrogate = match &rs.path {
        Some(p) => {
            if rs.factor.is_some() || rs.horizon_ctu.is_some() || rs.cfl.is_some() || rs.k_coeff.is_some() {
                return Err(field_err("surrogate", "path cannot be combined with proxy settings"));
            }
            SurrogateSource::File(p.clone())
        }
        None => {
            let mut o = ProxyOptions::default();
            if let Some(v) = rs.factor {
                o.factor = positive_count("surrogate.factor", v, 2)?;
            }
            if let Some(v) = rs.horizon_ctu {
                o.horizon_ctu = v;
            }
            if let Some(v) = rs.cfl {
                o.cfl = v;
            }
            if let Some(v) = rs.k_coeff {
                o.k_coeff = v;
            }
            if !(o.horizon_ctu > 0.0 && o.cfl > 0.0 && o.cfl <= 0.9 && o.k_coeff >= 0.0) {
                return Err(field_err("surrogate", "horizon_ctu > 0, 0 < cfl <= 0.9 and k_coeff >= 0 required"));
            }
            if nx % o.factor != 0 || ny % o.factor != 0 {
                return Err(field_err("surrogate.factor", format!("must divide nx and ny (got {})", o.factor)));
            }
            SurrogateSource::CoarseProxy(o)
        }
    };

    let rp = &raw.prior;
    let drop_k = rp.drop_k.unwrap_or(false);
    let prior = match &rp.path {
        Some(p) => {
            if rp.t_end.is_some() || rp.dt.is_some() || rp.state.is_some() {
                return Err(field_err("prior", "path cannot be combined with precursor settings"));
            }
            PriorSource::File(p.clone())
        }
        None => {
            let state = match rp.state.as_deref().unwrap_or("final") {
                "final" => PriorState::Final,
                "average" => PriorState::Average,
                other => return Err(field_err("prior.state", format!("expected final or average (got {other})"))),
            };
            let t_end = rp.t_end.unwrap_or(solver.t_end);
            let dt = rp.dt.unwrap_or(solver.dt);
            SolverConfig::new(dt, t_end)
                .validate()
                .map_err(|e| field_err("prior", e.to_string()))?;
            PriorSource::Precursor { t_end, dt, state }
        }
    };

    if raw.strategies.is_empty() {
        return Err(field_err("strategies", "at least one strategy is required"));
    }
    let prior_path = match &prior {
        PriorSource::File(p) => p.clone(),
        PriorSource::Precursor { .. } => raw.output_dir.join("prior").join("prior.vtk"),
    };
    let mut strategies = Vec::new();
    for name in &raw.strategies {
        let s = match name.as_str() {
            "uniform" => InitStrategy::Uniform,
            "potential" => InitStrategy::Potential,
            "prior_solution" => InitStrategy::PriorSolution {
                path: prior_path.clone(),
                drop_k,
            },
            "surrogate_uniform" => InitStrategy::SurrogateUniform(surrogate.clone()),
            "surrogate_idw" => InitStrategy::SurrogateIdw(surrogate.clone()),
            "surrogate_hybrid" => InitStrategy::SurrogateHybrid(surrogate.clone(), blend),
            other => return Err(field_err("strategies", format!("unknown strategy {other}"))),
        };
        if strategies.iter().any(|x: &InitStrategy| x.name() == s.name()) {
            return Err(field_err("strategies", format!("{name} listed twice")));
        }
        strategies.push(s);
    }
    if strategies.iter().any(|s| matches!(s, InitStrategy::SurrogateHybrid(..))) {
        blend.validate().map_err(|e| field_err("blend", e.to_string()))?;
    }

    let tol = raw.convergence.tol.unwrap_or(0.01);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(field_err("convergence.tol", format!("must lie in (0, 1) (got {tol})")));
    }
    if raw.snapshot_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(field_err("snapshot_times", "times must be finite and non-negative"));
    }

    Ok(ExperimentConfig {
        grid,
        shape,
        freestream,
        solver,
        strategies,
        blend,
        extension,
        surrogate,
        prior,
        tol,
        output_dir: raw.output_dir,
        snapshot_times: raw.snapshot_times,
        parallel: raw.parallel,
        seed: raw.seed,
    })
}

/// Reads a config file; relative paths inside it resolve against the
/// file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let fix = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    fix(&mut cfg.output_dir);
    if let SurrogateSource::File(p) = &mut cfg.surrogate {
        fix(p);
    }
    if let PriorSource::File(p) = &mut cfg.prior {
        fix(p);
    }
    let prior_path = match &cfg.prior {
        PriorSource::File(p) => p.clone(),
        PriorSource::Precursor { .. } => cfg.output_dir.join("prior").join("prior.vtk"),
    };
    for s in &mut cfg.strategies {
        match s {
            InitStrategy::PriorSolution { path, .. } => *path = prior_path.clone(),
            InitStrategy::SurrogateUniform(src) | InitStrategy::SurrogateIdw(src) | InitStrategy::SurrogateHybrid(src, _) => {
                *src = cfg.surrogate.clone()
            }
            _ => {}
        }
    }
    Ok(cfg)
}
