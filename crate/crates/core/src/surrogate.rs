//! Near-field surrogate predictions: the point-sampled field format and the
//! built-in coarse-grid proxy.
//!
//! File format (ASCII, line oriented, `#` starts a comment):
//!
//! ```text
//! SURROGATE v1
//! bbox xmin ymin xmax ymax
//! n <count>
//! x y u v p k
//! ...
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Field2;
use crate::grid::{FreestreamConditions, Grid, GridSpec, ObstacleMask};
use crate::potential::solve_potential;
use crate::solver::{cfl_number, RunOptions, SolverConfig, TransientSolver};
use crate::state::{apply_boundary_conditions, FlowState};

/// Closed axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }

    pub fn is_valid(&self) -> bool {
        [self.xmin, self.ymin, self.xmax, self.ymax].iter().all(|v| v.is_finite())
            && self.xmax > self.xmin
            && self.ymax > self.ymin
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateField {
    pub bbox: BBox,
    pub points: Vec<(f64, f64)>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub k: Vec<f64>,
}

/// Minimum sample count; IDW needs neighbours.
pub const MIN_POINTS: usize = 4;

impl SurrogateField {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if [self.u.len(), self.v.len(), self.p.len(), self.k.len()].iter().any(|&l| l != n) {
            return Err(Error::InvalidSurrogate("field lengths differ from point count".into()));
        }
        if !self.bbox.is_valid() {
            return Err(Error::InvalidSurrogate("degenerate bounding box".into()));
        }
        if n < MIN_POINTS {
            return Err(Error::InvalidSurrogate(format!("need at least {MIN_POINTS} points, got {n}")));
        }
        for (idx, &(x, y)) in self.points.iter().enumerate() {
            if !self.bbox.contains(x, y) {
                return Err(Error::InvalidSurrogate(format!("point {idx} ({x}, {y}) lies outside the bounding box")));
            }
            let vals = [self.u[idx], self.v[idx], self.p[idx], self.k[idx]];
            if !x.is_finite() || !y.is_finite() || vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSurrogate(format!("non-finite value at point {idx}")));
            }
            if self.k[idx] < 0.0 {
                return Err(Error::InvalidSurrogate(format!("negative k at point {idx}")));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let b = &self.bbox;
        let mut s = String::new();
        let _ = writeln!(s, "SURROGATE v1");
        let _ = writeln!(s, "bbox {} {} {} {}", b.xmin, b.ymin, b.xmax, b.ymax);
        let _ = writeln!(s, "n {}", self.points.len());
        for n in 0..self.points.len() {
            let (x, y) = self.points[n];
            let _ = writeln!(s, "{} {} {} {} {} {}", x, y, self.u[n], self.v[n], self.p[n], self.k[n]);
        }
        s
    }

    /// Parses the text format; `source` names the input in error messages.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let nums = |line: usize, parts: &[&str]| -> Result<Vec<f64>> {
            parts
                .iter()
                .map(|t| t.parse::<f64>().map_err(|_| err(line, format!("not a number: {t}"))))
                .collect()
        };
        let (ln, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        if header != "SURROGATE v1" {
            return Err(err(ln, format!("expected header `SURROGATE v1`, found `{header}`")));
        }
        let (ln, bbox_line) = lines.next().ok_or_else(|| err(ln + 1, "missing bbox line".into()))?;
        let parts: Vec<&str> = bbox_line.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != "bbox" {
            return Err(err(ln, "expected `bbox xmin ymin xmax ymax`".into()));
        }
        let b = nums(ln, &parts[1..])?;
        let bbox = BBox {
            xmin: b[0],
            ymin: b[1],
            xmax: b[2],
            ymax: b[3],
        };
        let (ln, n_line) = lines.next().ok_or_else(|| err(ln + 1, "missing point count".into()))?;
        let parts: Vec<&str> = n_line.split_whitespace().collect();
        if parts.len() != 2 || parts[0] != "n" {
            return Err(err(ln, "expected `n <count>`".into()));
        }
        let count: usize = parts[1].parse().map_err(|_| err(ln, format!("bad point count {}", parts[1])))?;
        let mut s = SurrogateField {
            bbox,
            points: Vec::with_capacity(count),
            u: Vec::with_capacity(count),
            v: Vec::with_capacity(count),
            p: Vec::with_capacity(count),
            k: Vec::with_capacity(count),
        };
        let mut last = ln;
        for (ln, row) in lines {
            last = ln;
            let parts: Vec<&str> = row.split_whitespace().collect();
            if parts.len() != 6 {
                return Err(err(ln, format!("expected 6 columns `x y u v p k`, found {}", parts.len())));
            }
            let r = nums(ln, &parts)?;
            if !bbox.contains(r[0], r[1]) {
                return Err(err(ln, format!("point ({}, {}) lies outside the bounding box", r[0], r[1])));
            }
            if r[5] < 0.0 {
                return Err(err(ln, format!("negative k ({})", r[5])));
            }
            s.points.push((r[0], r[1]));
            s.u.push(r[2]);
            s.v.push(r[3]);
            s.p.push(r[4]);
            s.k.push(r[5]);
        }
        if s.points.len() != count {
            return Err(err(last, format!("declared {count} points but found {}", s.points.len())));
        }
        s.validate().map_err(|e| err(last, e.to_string()))?;
        Ok(s)
    }
}

pub fn load_surrogate(path: &Path) -> Result<SurrogateField> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SurrogateField::parse(&text, &path.display().to_string())
}

pub fn save_surrogate(path: &Path, s: &SurrogateField) -> Result<()> {
    s.validate()?;
    std::fs::write(path, s.to_text()).map_err(|e| Error::io(path, e))
}

/// Settings for the coarse-grid stand-in for a learned surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyOptions {
    pub factor: usize,
    /// Simulated horizon in convective time units `l₀ / U∞`.
    pub horizon_ctu: f64,
    /// Target CFL for the coarse run's timestep.
    pub cfl: f64,
    /// Constant in `k = max(k∞, c·ω²·Δ²)`.
    pub k_coeff: f64,
    /// Box margins in obstacle lengths.
    pub upstream: f64,
    pub lateral: f64,
    pub downstream: f64,
}

impl Default for ProxyOptions {
    fn default() -> Self {
        Self {
            factor: 4,
            horizon_ctu: 40.0,
            cfl: 0.5,
            k_coeff: 0.05,
            upstream: 1.5,
            lateral: 1.5,
            downstream: 4.0,
        }
    }
}

/// `k_proxy = max(k∞, c·ω²·Δ²)`.
#[inline]
pub fn proxy_k(omega: f64, delta: f64, k_inf: f64, c: f64) -> f64 {
    k_inf.max(c * omega * omega * delta * delta)
}

/// Near-field box around the obstacle, clipped to the domain.
pub fn near_field_bbox(grid: &Grid, mask: &ObstacleMask, opts: &ProxyOptions) -> Result<BBox> {
    let (x0, y0, x1, y1) = mask.solid_extent(grid).ok_or(Error::EmptyObstacle)?;
    let len = (x1 - x0).max(y1 - y0);
    Ok(BBox {
        xmin: (x0 - opts.upstream * len).max(0.0),
        ymin: (y0 - opts.lateral * len).max(0.0),
        xmax: (x1 + opts.downstream * len).min(grid.lx()),
        ymax: (y1 + opts.lateral * len).min(grid.ly()),
    })
}

/// Vorticity `∂v/∂x − ∂u/∂y` at cell centres from centred differences of
/// the cell-centre velocities (one-sided at the domain edges).
pub fn vorticity(state: &FlowState, grid: &Grid) -> Field2 {
    let (uc, vc) = state.velocity_centers();
    let (nx, ny) = (grid.nx(), grid.ny());
    Field2::from_fn(nx, ny, |i, j| {
        let (il, ir) = (i.saturating_sub(1), (i + 1).min(nx - 1));
        let (jl, jr) = (j.saturating_sub(1), (j + 1).min(ny - 1));
        let dvdx = (vc.get(ir, j) - vc.get(il, j)) / ((ir - il) as f64 * grid.dx());
        let dudy = (uc.get(i, jr) - uc.get(i, jl)) / ((jr - jl) as f64 * grid.dy());
        dvdx - dudy
    })
}

/// Runs the transient solver on a grid coarsened by `opts.factor`, averages
/// the final third of the run and samples the fluid cell centres inside the
/// near-field box.
pub fn build_proxy_surrogate(
    grid: &Grid,
    mask: &ObstacleMask,
    fs: &FreestreamConditions,
    opts: &ProxyOptions,
) -> Result<SurrogateField> {
    let f = opts.factor;
    if f < 2 {
        return Err(Error::InvalidSurrogate(format!("coarsening factor must be at least 2 (got {f})")));
    }
    if grid.nx() % f != 0 || grid.ny() % f != 0 {
        return Err(Error::InvalidSurrogate(format!(
            "grid {}x{} is not divisible by factor {f}",
            grid.nx(),
            grid.ny()
        )));
    }
    if !(opts.horizon_ctu > 0.0 && opts.cfl > 0.0 && opts.cfl <= 0.9 && opts.k_coeff >= 0.0) {
        return Err(Error::InvalidSurrogate("proxy horizon, CFL and k coefficient must be positive".into()));
    }
    let coarse = Grid::new(GridSpec {
        nx: grid.nx() / f,
        ny: grid.ny() / f,
        ..*grid.spec()
    })?;
    let cmask = mask.coarsen(&coarse, f)?;
    if cmask.is_empty() {
        return Err(Error::InvalidSurrogate("obstacle vanishes on the coarse grid".into()));
    }
    let pot = solve_potential(&coarse, &cmask, fs, 1e-8, 20 * coarse.cell_count())?;
    let mut state = FlowState::zeros(&coarse);
    state.u = pot.u;
    state.v = pot.v;
    state.p = pot.p;
    state.k.fill(fs.k_inf);
    apply_boundary_conditions(&mut state, &coarse, fs, &cmask)?;

    // Timestep from the initial speeds (which bound later ones on this
    // case) and the explicit diffusion limit.
    let speed_rate = cfl_number(&state, &coarse, 1.0).0.max(fs.u_inf / coarse.dx());
    let dt_adv = opts.cfl / speed_rate;
    let h = coarse.dx().min(coarse.dy());
    let dt_diff = 0.2 * h * h / fs.nu;
    let horizon = opts.horizon_ctu * fs.l0 / fs.u_inf;
    let dt = dt_adv.min(dt_diff).min(horizon / 30.0);
    let steps = (horizon / dt).ceil() as usize;
    let dt = horizon / steps as f64;
    let cfg = SolverConfig {
        sample_every: steps,
        ..SolverConfig::new(dt, horizon)
    };
    let mut solver = TransientSolver::new(&coarse, &cmask, fs, &cfg)?;
    let out = solver.run(
        &state,
        &RunOptions {
            snapshot_times: Vec::new(),
            average_from: Some(horizon * 2.0 / 3.0),
        },
    )?;
    let mean = out.average.unwrap_or(out.final_state);

    let bbox = near_field_bbox(grid, mask, opts)?;
    let omega = vorticity(&mean, &coarse);
    let delta = coarse.dx().max(coarse.dy());
    let mut s = SurrogateField {
        bbox,
        points: Vec::new(),
        u: Vec::new(),
        v: Vec::new(),
        p: Vec::new(),
        k: Vec::new(),
    };
    for j in 0..coarse.ny() {
        for i in 0..coarse.nx() {
            if cmask.is_solid(i, j) {
                continue;
            }
            let (x, y) = coarse.cell_center(i, j);
            if !bbox.contains(x, y) {
                continue;
            }
            s.points.push((x, y));
            s.u.push(mean.u_center(i, j));
            s.v.push(mean.v_center(i, j));
            s.p.push(mean.p.get(i, j));
            s.k.push(proxy_k(omega.get(i, j), delta, fs.k_inf, opts.k_coeff));
        }
    }
    s.validate()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "SURROGATE v1\nbbox 0 0 1 1\nn 4\n0 0 1 0 0 0.1\n1 0 1 0 0 0.1\n0 1 1 0 0 0.1\n1 1 1 0 0 0.1\n";

    #[test]
    fn parses_minimal_file() {
        let s = SurrogateField::parse(MINIMAL, "mem").unwrap();
        assert_eq!(s.len(), 4);
        let again = SurrogateField::parse(&s.to_text(), "mem").unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn rejects_bad_rows() {
        let outside = MINIMAL.replace("1 1 1 0 0 0.1", "2 1 1 0 0 0.1");
        let e = SurrogateField::parse(&outside, "mem").unwrap_err().to_string();
        assert!(e.contains("outside"), "{e}");
        assert!(e.contains(":7:"), "{e}");
        let neg = MINIMAL.replace("1 1 1 0 0 0.1", "1 1 1 0 0 -0.1");
        let e = SurrogateField::parse(&neg, "mem").unwrap_err().to_string();
        assert!(e.contains("negative k"), "{e}");
        let few = "SURROGATE v1\nbbox 0 0 1 1\nn 3\n0 0 1 0 0 0\n1 0 1 0 0 0\n0 1 1 0 0 0\n";
        assert!(SurrogateField::parse(few, "mem").is_err());
        assert!(SurrogateField::parse("SURROGATE v2\n", "mem").is_err());
        let miscount = MINIMAL.replace("n 4", "n 5");
        assert!(SurrogateField::parse(&miscount, "mem").is_err());
    }

    #[test]
    fn proxy_k_formula() {
        let (k_inf, c, delta) = (0.24, 0.05, 0.125);
        assert_eq!(proxy_k(0.0, delta, k_inf, c), k_inf);
        let omega = 10.0 * (k_inf / c).sqrt() / delta;
        assert!((proxy_k(omega, delta, k_inf, c) - 100.0 * k_inf).abs() < 1e-12);
    }
}
