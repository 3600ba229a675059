//! Initial-field construction for every strategy.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::Field2;
use crate::grid::{FreestreamConditions, Grid, ObstacleMask};
use crate::idw::{apply_weights, IdwParams, PointIndex};
use crate::potential::{potential_k_field, solve_potential};
use crate::snapshot::read_snapshot;
use crate::state::{apply_boundary_conditions, FlowState};
use crate::surrogate::{ProxyOptions, SurrogateField};

/// Thresholds of the k-based blending ramp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendParams {
    pub k_inf: f64,
    pub k_lower: f64,
    pub k_upper: f64,
}

impl BlendParams {
    /// `k_lower = 1.5·k∞`, `k_upper = 3·k∞`.
    pub fn from_k_inf(k_inf: f64) -> Self {
        Self {
            k_inf,
            k_lower: 1.5 * k_inf,
            k_upper: 3.0 * k_inf,
        }
    }

    pub fn new(k_inf: f64, k_lower: f64, k_upper: f64) -> Result<Self> {
        let bp = Self { k_inf, k_lower, k_upper };
        bp.validate()?;
        Ok(bp)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.k_inf, self.k_lower, self.k_upper].iter().all(|v| v.is_finite())
            && 0.0 <= self.k_inf
            && self.k_inf < self.k_lower
            && self.k_lower < self.k_upper;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidBlend(format!(
                "need 0 <= k_inf < k_lower < k_upper (got {}, {}, {})",
                self.k_inf, self.k_lower, self.k_upper
            )))
        }
    }
}

/// `α = sin²(π/2 · clip((k − k_lower)/(k_upper − k_lower), 0, 1))`.
#[inline]
pub fn blend_alpha(k: f64, bp: &BlendParams) -> f64 {
    let s = ((k - bp.k_lower) / (bp.k_upper - bp.k_lower)).clamp(0.0, 1.0);
    let a = (std::f64::consts::FRAC_PI_2 * s).sin();
    a * a
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurrogateSource {
    File(PathBuf),
    CoarseProxy(ProxyOptions),
}

impl SurrogateSource {
    pub fn load(&self, grid: &Grid, mask: &ObstacleMask, fs: &FreestreamConditions) -> Result<SurrogateField> {
        match self {
            SurrogateSource::File(path) => crate::surrogate::load_surrogate(path),
            SurrogateSource::CoarseProxy(opts) => crate::surrogate::build_proxy_surrogate(grid, mask, fs, opts),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    Uniform,
    Potential,
    /// Fields of an earlier run; `drop_k` resets k to `k∞`.
    PriorSolution { path: PathBuf, drop_k: bool },
    SurrogateUniform(SurrogateSource),
    SurrogateIdw(SurrogateSource),
    SurrogateHybrid(SurrogateSource, BlendParams),
}

impl InitStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            InitStrategy::Uniform => "uniform",
            InitStrategy::Potential => "potential",
            InitStrategy::PriorSolution { .. } => "prior_solution",
            InitStrategy::SurrogateUniform(_) => "surrogate_uniform",
            InitStrategy::SurrogateIdw(_) => "surrogate_idw",
            InitStrategy::SurrogateHybrid(..) => "surrogate_hybrid",
        }
    }

    pub fn surrogate_source(&self) -> Option<&SurrogateSource> {
        match self {
            InitStrategy::SurrogateUniform(s) | InitStrategy::SurrogateIdw(s) | InitStrategy::SurrogateHybrid(s, _) => Some(s),
            _ => None,
        }
    }
}

/// Shared settings for the surrogate extensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtensionParams {
    pub idw: IdwParams,
    /// One boundary seed per this many boundary cells.
    pub seed_spacing: usize,
}

impl ExtensionParams {
    pub fn for_grid(grid: &Grid) -> Self {
        Self {
            idw: IdwParams::for_diagonal(grid.diagonal()),
            seed_spacing: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.idw.validate()?;
        if self.seed_spacing == 0 {
            return Err(Error::InvalidSurrogate("boundary seed spacing must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn init_uniform(grid: &Grid, mask: &ObstacleMask, fs: &FreestreamConditions) -> Result<FlowState> {
    let mut s = FlowState::zeros(grid);
    s.u.fill(fs.u_inf);
    s.k.fill(fs.k_inf);
    apply_boundary_conditions(&mut s, grid, fs, mask)?;
    Ok(s)
}

/// Potential-flow velocity and pressure with uniform `k∞`.
pub fn init_potential(grid: &Grid, mask: &ObstacleMask, fs: &FreestreamConditions) -> Result<FlowState> {
    let pot = solve_potential(grid, mask, fs, 1e-8, 20 * grid.cell_count())?;
    let mut s = FlowState {
        u: pot.u,
        v: pot.v,
        p: pot.p,
        k: potential_k_field(grid, fs),
        t: 0.0,
    };
    apply_boundary_conditions(&mut s, grid, fs, mask)?;
    Ok(s)
}

/// Loads a snapshot written by an earlier run, interpolating if its
/// resolution differs. The clock restarts at zero.
pub fn init_prior_solution(
    grid: &Grid,
    mask: &ObstacleMask,
    fs: &FreestreamConditions,
    path: &Path,
    drop_k: bool,
) -> Result<FlowState> {
    let mut s = read_snapshot(path, grid, fs)?;
    if drop_k {
        s.k.fill(fs.k_inf);
    }
    s.t = 0.0;
    apply_boundary_conditions(&mut s, grid, fs, mask)?;
    s.validate(grid)?;
    Ok(s)
}

/// Sample locations of every state component, in storage order.
fn locations(grid: &Grid) -> [Vec<(f64, f64)>; 2] {
    let (nx, ny) = (grid.nx(), grid.ny());
    let u: Vec<_> = (0..ny).flat_map(|j| (0..=nx).map(move |i| (i, j))).map(|(i, j)| grid.u_face(i, j)).collect();
    let v: Vec<_> = (0..=ny).flat_map(|j| (0..nx).map(move |i| (i, j))).map(|(i, j)| grid.v_face(i, j)).collect();
    [u, v]
}

fn centres(grid: &Grid) -> Vec<(f64, f64)> {
    (0..grid.ny())
        .flat_map(|j| (0..grid.nx()).map(move |i| (i, j)))
        .map(|(i, j)| grid.cell_center(i, j))
        .collect()
}

/// IDW over a point set carrying (u, v, p, k).
struct Donor<'a> {
    index: PointIndex,
    values: [&'a [f64]; 4],
    params: IdwParams,
}

impl Donor<'_> {
    fn eval(&self, q: (f64, f64), component: usize, scratch: &mut Vec<(f64, usize)>, w: &mut Vec<(usize, f64)>) -> f64 {
        self.index.weights(q, &self.params, scratch, w);
        apply_weights(w, self.values[component])
    }
}

/// Evaluates component `c` (0 = u, 1 = v, 2 = p, 3 = k) at every location,
/// using `far` outside the `use_donor` region.
fn fill_component(
    locs: &[(f64, f64)],
    donor: &Donor,
    c: usize,
    use_donor: impl Fn((f64, f64)) -> bool,
    far: f64,
    out: &mut [f64],
) {
    let (mut scratch, mut w) = (Vec::new(), Vec::new());
    for (o, &q) in out.iter_mut().zip(locs) {
        *o = if use_donor(q) { donor.eval(q, c, &mut scratch, &mut w) } else { far };
    }
}

fn extend(
    grid: &Grid,
    mask: &ObstacleMask,
    fs: &FreestreamConditions,
    donor: &Donor,
    use_donor: impl Fn((f64, f64)) -> bool + Copy,
) -> Result<FlowState> {
    let [lu, lv] = locations(grid);
    let lc = centres(grid);
    let mut s = FlowState::zeros(grid);
    fill_component(&lu, donor, 0, use_donor, fs.u_inf, s.u.as_mut_slice());
    fill_component(&lv, donor, 1, use_donor, 0.0, s.v.as_mut_slice());
    fill_component(&lc, donor, 2, use_donor, 0.0, s.p.as_mut_slice());
    fill_component(&lc, donor, 3, use_donor, fs.k_inf, s.k.as_mut_slice());
    for k in s.k.as_mut_slice() {
        *k = k.max(0.0);
    }
    apply_boundary_conditions(&mut s, grid, fs, mask)?;
    Ok(s)
}

/// Surrogate values inside its box, freestream values outside.
pub fn extend_surrogate_uniform(
    s: &SurrogateField,
    grid: &Grid,
    mask: &ObstacleMask,
    fs: &FreestreamConditions,
    params: &ExtensionParams,
) -> Result<FlowState> {
    s.validate()?;
    params.validate()?;
    let donor = Donor {
        index: PointIndex::new(&s.points)?,
        values: [&s.u, &s.v, &s.p, &s.k],
        params: params.idw,
    };
    let bbox = s.bbox;
    extend(grid, mask, fs, &donor, |(x, y)| bbox.contains(x, y))
}

/// Boundary points carrying known boundary values: every `spacing` cells
/// along the inlet, outlet and both slip walls. All carry
/// `(U∞, 0, 0, k∞)`: the inlet by definition, the outlet with `p = 0` and
/// a freestream velocity donor, the walls with `v = 0` and `u = U∞`.
pub fn boundary_seeds(grid: &Grid, spacing: usize) -> Vec<(f64, f64)> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (lx, ly) = (grid.lx(), grid.ly());
    let mut pts = Vec::new();
    for j in (0..ny).step_by(spacing) {
        let y = grid.cell_center(0, j).1;
        pts.push((0.0, y));
        pts.push((lx, y));
    }
    for i in (0..nx).step_by(spacing) {
        let x = grid.cell_center(i, 0).0;
        pts.push((x, 0.0));
        pts.push((x, ly));
    }
    pts
}

/// Surrogate samples merged with boundary seeds, IDW everywhere.
pub fn extend_surrogate_idw(
    s: &SurrogateField,
    grid: &Grid,
    mask: &ObstacleMask,
    fs: &FreestreamConditions,
    params: &ExtensionParams,
) -> Result<FlowState> {
    s.validate()?;
    params.validate()?;
    let seeds = boundary_seeds(grid, params.seed_spacing);
    let n = seeds.len();
    let mut points = s.points.clone();
    points.extend_from_slice(&seeds);
    let cat = |a: &[f64], v: f64| -> Vec<f64> { a.iter().copied().chain(std::iter::repeat(v).take(n)).collect() };
    let (u, v, p, k) = (cat(&s.u, fs.u_inf), cat(&s.v, 0.0), cat(&s.p, 0.0), cat(&s.k, fs.k_inf));
    let donor = Donor {
        index: PointIndex::new(&points)?,
        values: [&u, &v, &p, &k],
        params: params.idw,
    };
    extend(grid, mask, fs, &donor, |_| true)
}

/// Blends the IDW-extended surrogate with potential flow using α from the
/// extended k at each storage location. Face values take α from the
/// extended k interpolated to the face.
pub fn init_surrogate_hybrid(
    s: &SurrogateField,
    grid: &Grid,
    mask: &ObstacleMask,
    fs: &FreestreamConditions,
    bp: &BlendParams,
    params: &ExtensionParams,
) -> Result<FlowState> {
    bp.validate()?;
    let ext = extend_surrogate_idw(s, grid, mask, fs, params)?;
    let pot = init_potential(grid, mask, fs)?;
    blend_states(&ext, &pot, &alpha_fields(&ext.k, grid, bp), grid, mask, fs)
}

/// α at cell centres and at both face families, from the surrogate k.
pub struct AlphaFields {
    pub centre: Field2,
    pub u_face: Field2,
    pub v_face: Field2,
}

pub fn alpha_fields(k: &Field2, grid: &Grid, bp: &BlendParams) -> AlphaFields {
    let (nx, ny) = (grid.nx(), grid.ny());
    let centre = Field2::from_fn(nx, ny, |i, j| blend_alpha(k.get(i, j), bp));
    let u_face = Field2::from_fn(nx + 1, ny, |i, j| {
        let kf = 0.5 * (k.get(i.saturating_sub(1), j) + k.get(i.min(nx - 1), j));
        blend_alpha(kf, bp)
    });
    let v_face = Field2::from_fn(nx, ny + 1, |i, j| {
        let kf = 0.5 * (k.get(i, j.saturating_sub(1)) + k.get(i, j.min(ny - 1)));
        blend_alpha(kf, bp)
    });
    AlphaFields { centre, u_face, v_face }
}

/// `α·a + (1 − α)·b` per location, then boundary conditions.
pub fn blend_states(
    a: &FlowState,
    b: &FlowState,
    alpha: &AlphaFields,
    grid: &Grid,
    mask: &ObstacleMask,
    fs: &FreestreamConditions,
) -> Result<FlowState> {
    let mix = |fa: &Field2, fb: &Field2, al: &Field2| -> Field2 {
        let data = fa
            .as_slice()
            .iter()
            .zip(fb.as_slice())
            .zip(al.as_slice())
            .map(|((&x, &y), &w)| if w == 0.0 { y } else if w == 1.0 { x } else { w * x + (1.0 - w) * y })
            .collect();
        Field2::from_vec(fa.nx(), fa.ny(), data)
    };
    let mut s = FlowState {
        u: mix(&a.u, &b.u, &alpha.u_face),
        v: mix(&a.v, &b.v, &alpha.v_face),
        p: mix(&a.p, &b.p, &alpha.centre),
        k: mix(&a.k, &b.k, &alpha.centre),
        t: 0.0,
    };
    apply_boundary_conditions(&mut s, grid, fs, mask)?;
    Ok(s)
}

/// Builds the initial state for `strategy`. A pre-built surrogate can be
/// passed to avoid rebuilding it per strategy.
pub fn build_initial_state(
    strategy: &InitStrategy,
    grid: &Grid,
    mask: &ObstacleMask,
    fs: &FreestreamConditions,
    params: &ExtensionParams,
    surrogate: Option<&SurrogateField>,
) -> Result<FlowState> {
    let owned;
    let sur = match (strategy.surrogate_source(), surrogate) {
        (Some(_), Some(s)) => Some(s),
        (Some(src), None) => {
            owned = src.load(grid, mask, fs)?;
            Some(&owned)
        }
        (None, _) => None,
    };
    match strategy {
        InitStrategy::Uniform => init_uniform(grid, mask, fs),
        InitStrategy::Potential => init_potential(grid, mask, fs),
        InitStrategy::PriorSolution { path, drop_k } => init_prior_solution(grid, mask, fs, path, *drop_k),
        InitStrategy::SurrogateUniform(_) => extend_surrogate_uniform(sur.unwrap(), grid, mask, fs, params),
        InitStrategy::SurrogateIdw(_) => extend_surrogate_idw(sur.unwrap(), grid, mask, fs, params),
        InitStrategy::SurrogateHybrid(_, bp) => init_surrogate_hybrid(sur.unwrap(), grid, mask, fs, bp, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_thresholds() {
        let bp = BlendParams::from_k_inf(0.24);
        assert!(blend_alpha(0.36, &bp).abs() < 1e-12);
        assert!((blend_alpha(0.72, &bp) - 1.0).abs() < 1e-12);
        assert!((blend_alpha(0.54, &bp) - 0.5).abs() < 1e-12);
        assert_eq!(blend_alpha(0.0, &bp), 0.0);
        assert_eq!(blend_alpha(10.0, &bp), 1.0);
    }

    #[test]
    fn blend_params_validation() {
        assert!(BlendParams::from_k_inf(0.24).validate().is_ok());
        assert!(BlendParams::from_k_inf(0.0).validate().is_err());
        assert!(BlendParams::new(0.24, 0.72, 0.36).is_err());
        assert!(BlendParams::new(-0.1, 0.36, 0.72).is_err());
    }

    #[test]
    fn strategy_names() {
        let src = SurrogateSource::CoarseProxy(ProxyOptions::default());
        assert_eq!(InitStrategy::Uniform.name(), "uniform");
        assert_eq!(InitStrategy::SurrogateIdw(src.clone()).name(), "surrogate_idw");
        assert!(InitStrategy::Potential.surrogate_source().is_none());
        assert!(InitStrategy::SurrogateHybrid(src, BlendParams::from_k_inf(0.24)).surrogate_source().is_some());
    }
}
