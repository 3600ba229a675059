//! Explicit fractional-step solver for 2D incompressible flow on the MAC grid.
//!
//! Each step advances the momentum equations with forward Euler, using
//! second-order central fluxes blended with donor-cell upwinding by the
//! local Courant number, then projects the predicted velocity onto the
//! divergence-free space. The turbulence indicator `k` is carried as a
//! passive scalar with first-order upwind fluxes and a linear relaxation
//! toward `k∞` at rate `U∞ / lx`.

use log::debug;

use crate::error::{Error, Result};
use crate::field::{Field2, ScalarField};
use crate::grid::{Boundary, FreestreamConditions, Grid, ObstacleMask};
use crate::poisson::PressureSolver;
use crate::state::{apply_boundary_conditions, FlowState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub cfl_limit: f64,
    pub poisson_tol: f64,
    pub n_correctors: usize,
    pub sample_every: usize,
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            cfl_limit: 0.9,
            poisson_tol: 1e-7,
            n_correctors: 2,
            sample_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSolverConfig(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive (got {})", self.dt));
        }
        if !(self.t_end > self.dt && self.t_end.is_finite()) {
            return bad(format!("t_end must exceed dt (got {})", self.t_end));
        }
        if !(self.cfl_limit > 0.0 && self.cfl_limit <= 1.0) {
            return bad(format!("cfl_limit must lie in (0, 1] (got {})", self.cfl_limit));
        }
        if !(self.poisson_tol > 0.0) {
            return bad(format!("poisson_tol must be positive (got {})", self.poisson_tol));
        }
        if self.n_correctors == 0 {
            return bad("n_correctors must be at least 1".into());
        }
        if self.sample_every == 0 {
            return bad("sample_every must be at least 1".into());
        }
        Ok(())
    }
}

/// Time-stamped force samples per unit depth.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForceSeries {
    pub times: Vec<f64>,
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
}

impl ForceSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, fx: f64, fy: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::InvalidSeries(format!("time {t} does not follow {last}")));
            }
        }
        self.times.push(t);
        self.fx.push(fx);
        self.fy.push(fy);
        Ok(())
    }
}

/// What a run should keep besides the force series.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub snapshot_times: Vec<f64>,
    /// Accumulate the time-averaged state over steps with `t ≥ average_from`.
    pub average_from: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: ForceSeries,
    pub snapshots: Vec<FlowState>,
    pub average: Option<FlowState>,
    pub final_state: FlowState,
    pub steps: usize,
}

/// Maximum cell Courant number `max(|u|)·dt/dx + max(|v|)·dt/dy` and the
/// cell where it occurs.
pub fn cfl_number(state: &FlowState, grid: &Grid, dt: f64) -> (f64, usize, usize) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (cx, cy) = (dt / grid.dx(), dt / grid.dy());
    let (us, vs) = (state.u.as_slice(), state.v.as_slice());
    let mut best = (0.0, 0, 0);
    for j in 0..ny {
        let ur = &us[j * (nx + 1)..(j + 1) * (nx + 1)];
        let vlo = &vs[j * nx..(j + 1) * nx];
        let vhi = &vs[(j + 1) * nx..(j + 2) * nx];
        let mut row_best = (0.0, 0);
        for i in 0..nx {
            let uu = ur[i].abs().max(ur[i + 1].abs());
            let vv = vlo[i].abs().max(vhi[i].abs());
            let c = uu * cx + vv * cy;
            if c > row_best.0 {
                row_best = (c, i);
            }
        }
        if row_best.0 > best.0 {
            best = (row_best.0, row_best.1, j);
        }
    }
    best
}

/// Total pressure `p + ½ρ|U|²` at cell centres.
pub fn total_pressure(state: &FlowState, fs: &FreestreamConditions) -> ScalarField {
    let (nx, ny) = state.p.dims();
    Field2::from_fn(nx, ny, |i, j| {
        let (uc, vc) = (state.u_center(i, j), state.v_center(i, j));
        state.p.get(i, j) + 0.5 * fs.rho * (uc * uc + vc * vc)
    })
}

/// Force per unit depth exerted by the fluid on the obstacle, integrated over
/// the exposed stair-step faces: pressure extrapolated to each face plus
/// wall shear from the adjacent tangential velocity.
pub fn compute_force(
    state: &FlowState,
    grid: &Grid,
    mask: &ObstacleMask,
    fs: &FreestreamConditions,
) -> Result<(f64, f64)> {
    if mask.is_empty() {
        return Err(Error::EmptyObstacle);
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let (dx, dy) = (grid.dx(), grid.dy());
    let mu = fs.mu();
    let p = &state.p;
    let fluid = |i: isize, j: isize| {
        i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && !mask.is_solid(i as usize, j as usize)
    };
    // Linear extrapolation from the cell and its neighbour away from the face.
    let face_p = |i: usize, j: usize, di: isize, dj: isize| {
        let (ai, aj) = (i as isize - di, j as isize - dj);
        if fluid(ai, aj) {
            1.5 * p.get(i, j) - 0.5 * p.get(ai as usize, aj as usize)
        } else {
            p.get(i, j)
        }
    };
    let (mut fx, mut fy) = (0.0, 0.0);
    for &(i, j) in mask.boundary_cells() {
        let (ii, jj) = (i as isize, j as isize);
        let solid = |di: isize, dj: isize| {
            let (a, b) = (ii + di, jj + dj);
            a >= 0 && b >= 0 && (a as usize) < nx && (b as usize) < ny && mask.is_solid(a as usize, b as usize)
        };
        if solid(1, 0) {
            fx += face_p(i, j, 1, 0) * dy;
            fy += mu * state.v_center(i, j) / (0.5 * dx) * dy;
        }
        if solid(-1, 0) {
            fx -= face_p(i, j, -1, 0) * dy;
            fy += mu * state.v_center(i, j) / (0.5 * dx) * dy;
        }
        if solid(0, 1) {
            fy += face_p(i, j, 0, 1) * dx;
            fx += mu * state.u_center(i, j) / (0.5 * dy) * dx;
        }
        if solid(0, -1) {
            fy -= face_p(i, j, 0, -1) * dx;
            fx += mu * state.u_center(i, j) / (0.5 * dy) * dx;
        }
    }
    Ok((fx, fy))
}

/// Padded copy of a face field with one ghost layer on every side.
struct Padded {
    w: usize,
    data: Vec<f64>,
}

impl Padded {
    fn new(nx: usize, ny: usize) -> Self {
        Self {
            w: nx + 2,
            data: vec![0.0; (nx + 2) * (ny + 2)],
        }
    }

    #[inline(always)]
    fn at(&self, i: isize, j: isize) -> f64 {
        self.data[((j + 1) as usize) * self.w + (i + 1) as usize]
    }

    #[inline(always)]
    fn put(&mut self, i: isize, j: isize, v: f64) {
        let w = self.w;
        self.data[((j + 1) as usize) * w + (i + 1) as usize] = v;
    }

    #[inline(always)]
    fn offset(&self, i: isize, j: isize) -> usize {
        ((j + 1) as usize) * self.w + (i + 1) as usize
    }
}

pub struct TransientSolver {
    grid: Grid,
    mask: ObstacleMask,
    fs: FreestreamConditions,
    cfg: SolverConfig,
    pressure: PressureSolver,
    up: Padded,
    vp: Padded,
    /// `(ghost, source)` pairs: ghost = −source, mirroring across solid walls.
    u_mirror: Vec<(usize, usize)>,
    v_mirror: Vec<(usize, usize)>,
    /// Faces advanced by the predictor.
    u_open: Vec<bool>,
    v_open: Vec<bool>,
    u_star: Field2,
    v_star: Field2,
    rhs: Vec<f64>,
    phi: Vec<f64>,
    k_new: Field2,
}

impl TransientSolver {
    pub fn new(grid: &Grid, mask: &ObstacleMask, fs: &FreestreamConditions, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        fs.validate()?;
        if mask.dims() != grid.cell_dims() {
            return Err(Error::ShapeMismatch {
                field: "mask",
                expected: grid.cell_dims(),
                got: mask.dims(),
            });
        }
        let (nx, ny) = (grid.nx(), grid.ny());
        let pressure = PressureSolver::new(grid, mask)?;
        let up = Padded::new(nx + 1, ny);
        let vp = Padded::new(nx, ny + 1);

        let mut u_mirror = Vec::new();
        let mut v_mirror = Vec::new();
        if !mask.is_empty() {
            let u_internal = |i: usize, j: usize| i > 0 && i < nx && mask.is_solid(i - 1, j) && mask.is_solid(i, j);
            for j in 0..ny {
                for i in 1..nx {
                    if !mask.u_face_open(i, j) {
                        continue;
                    }
                    if j + 1 < ny && u_internal(i, j + 1) {
                        u_mirror.push((up.offset(i as isize, j as isize + 1), up.offset(i as isize, j as isize)));
                    }
                    if j > 0 && u_internal(i, j - 1) {
                        u_mirror.push((up.offset(i as isize, j as isize - 1), up.offset(i as isize, j as isize)));
                    }
                }
            }
            let v_internal = |i: usize, j: usize| j > 0 && j < ny && mask.is_solid(i, j - 1) && mask.is_solid(i, j);
            for j in 1..ny {
                for i in 0..nx {
                    if !mask.v_face_open(i, j) {
                        continue;
                    }
                    if i + 1 < nx && v_internal(i + 1, j) {
                        v_mirror.push((vp.offset(i as isize + 1, j as isize), vp.offset(i as isize, j as isize)));
                    }
                    if i > 0 && v_internal(i - 1, j) {
                        v_mirror.push((vp.offset(i as isize - 1, j as isize), vp.offset(i as isize, j as isize)));
                    }
                }
            }
        }
        let periodic = grid.boundary() == Boundary::Periodic;
        let mut u_open = vec![false; (nx + 1) * ny];
        for j in 0..ny {
            for i in 0..nx {
                u_open[j * (nx + 1) + i] = if periodic { true } else { mask.u_face_open(i, j) };
            }
        }
        let mut v_open = vec![false; nx * (ny + 1)];
        for j in 0..ny {
            for i in 0..nx {
                v_open[j * nx + i] = if periodic { true } else { mask.v_face_open(i, j) };
            }
        }
        Ok(Self {
            grid: grid.clone(),
            mask: mask.clone(),
            fs: *fs,
            cfg: *cfg,
            pressure,
            up,
            vp,
            u_mirror,
            v_mirror,
            u_open,
            v_open,
            u_star: Field2::zeros(nx + 1, ny),
            v_star: Field2::zeros(nx, ny + 1),
            rhs: vec![0.0; nx * ny],
            phi: vec![0.0; nx * ny],
            k_new: Field2::zeros(nx, ny),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mask(&self) -> &ObstacleMask {
        &self.mask
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn freestream(&self) -> &FreestreamConditions {
        &self.fs
    }

    /// Divergence bound the projection must meet, `poisson_tol · U∞ / dx`.
    pub fn divergence_bound(&self) -> f64 {
        self.cfg.poisson_tol * self.fs.u_inf / self.grid.dx()
    }

    fn fill_ghosts(&mut self, u: &Field2, v: &Field2) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let up = &mut self.up;
        let uw = up.w;
        for j in 0..ny {
            let dst = (j + 1) * uw + 1;
            up.data[dst..dst + nx + 1].copy_from_slice(&u.as_slice()[j * (nx + 1)..(j + 1) * (nx + 1)]);
        }
        let vp = &mut self.vp;
        let vw = vp.w;
        for j in 0..=ny {
            let dst = (j + 1) * vw + 1;
            vp.data[dst..dst + nx].copy_from_slice(&v.as_slice()[j * nx..(j + 1) * nx]);
        }
        let (nxi, nyi) = (nx as isize, ny as isize);
        match self.grid.boundary() {
            Boundary::Channel => {
                for j in 0..nyi {
                    up.put(-1, j, up.at(0, j));
                    up.put(nxi + 1, j, up.at(nxi, j));
                }
                let row = |j: usize| j * uw;
                up.data.copy_within(row(1)..row(2), row(0));
                up.data.copy_within(row(ny)..row(ny + 1), row(ny + 1));
                for j in 0..=nyi {
                    vp.put(-1, j, -vp.at(0, j));
                    vp.put(nxi, j, vp.at(nxi - 1, j));
                }
                let row = |j: usize| j * vw;
                vp.data.copy_within(row(1)..row(2), row(0));
                vp.data.copy_within(row(ny + 1)..row(ny + 2), row(ny + 2));
            }
            Boundary::Periodic => {
                for j in 0..nyi {
                    up.put(-1, j, up.at(nxi - 1, j));
                    up.put(nxi + 1, j, up.at(1, j));
                }
                let row = |j: usize| j * uw;
                up.data.copy_within(row(ny)..row(ny + 1), row(0));
                up.data.copy_within(row(1)..row(2), row(ny + 1));
                for j in 0..=nyi {
                    vp.put(-1, j, vp.at(nxi - 1, j));
                    vp.put(nxi, j, vp.at(0, j));
                }
                let row = |j: usize| j * vw;
                vp.data.copy_within(row(ny)..row(ny + 1), row(0));
                vp.data.copy_within(row(2)..row(3), row(ny + 2));
            }
        }
        for &(g, s) in &self.u_mirror {
            self.up.data[g] = -self.up.data[s];
        }
        for &(g, s) in &self.v_mirror {
            self.vp.data[g] = -self.vp.data[s];
        }
    }

    /// Advection–diffusion predictor written into `u_star`, `v_star`.
    fn predict(&mut self, state: &FlowState, gamma: f64, u_star: &mut Field2, v_star: &mut Field2) {
        self.fill_ghosts(&state.u, &state.v);
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let (idx, idy) = (1.0 / self.grid.dx(), 1.0 / self.grid.dy());
        let (idx2, idy2) = (idx * idx, idy * idy);
        let nu = self.fs.nu;
        let dt = self.cfg.dt;
        let periodic = self.grid.boundary() == Boundary::Periodic;
        let up = &self.up.data[..];
        let vp = &self.vp.data[..];
        let (uw, vw) = (self.up.w, self.vp.w);
        let g = gamma;

        let us = u_star.as_mut_slice();
        for j in 0..ny {
            let (cu, nu_, su) = ((j + 1) * uw, (j + 2) * uw, j * uw);
            let (vn_row, vs_row) = ((j + 2) * vw, (j + 1) * vw);
            let open = &self.u_open[j * (nx + 1)..(j + 1) * (nx + 1)];
            let out = &mut us[j * (nx + 1)..(j + 1) * (nx + 1)];
            for i in 0..nx {
                if !open[i] {
                    continue;
                }
                let p = i + 1;
                // SAFETY: padded rows hold nx+3 entries and p+1 ≤ nx+1.
                let (uc, ue, uw_, un, us_, vn, vs) = unsafe {
                    (
                        *up.get_unchecked(cu + p),
                        *up.get_unchecked(cu + p + 1),
                        *up.get_unchecked(cu + p - 1),
                        *up.get_unchecked(nu_ + p),
                        *up.get_unchecked(su + p),
                        0.5 * (*vp.get_unchecked(vn_row + p - 1) + *vp.get_unchecked(vn_row + p)),
                        0.5 * (*vp.get_unchecked(vs_row + p - 1) + *vp.get_unchecked(vs_row + p)),
                    )
                };
                let ae = 0.5 * (uc + ue);
                let aw = 0.5 * (uw_ + uc);
                let du2dx = ((ae * ae - aw * aw) + g * (ae.abs() * 0.5 * (uc - ue) - aw.abs() * 0.5 * (uw_ - uc))) * idx;
                let duvdy = ((vn * 0.5 * (uc + un) - vs * 0.5 * (us_ + uc))
                    + g * (vn.abs() * 0.5 * (uc - un) - vs.abs() * 0.5 * (us_ - uc)))
                    * idy;
                let lap = (ue - 2.0 * uc + uw_) * idx2 + (un - 2.0 * uc + us_) * idy2;
                out[i] = uc + dt * (nu * lap - du2dx - duvdy);
            }
            out[nx] = if periodic { out[0] } else { out[nx - 1] };
        }

        let vs_out = v_star.as_mut_slice();
        for j in 0..ny {
            let (cv, nv, sv) = ((j + 1) * vw, (j + 2) * vw, j * vw);
            let (ur_hi, ur_lo) = ((j + 1) * uw, j * uw);
            let open = &self.v_open[j * nx..(j + 1) * nx];
            let out = &mut vs_out[j * nx..(j + 1) * nx];
            for i in 0..nx {
                if !open[i] {
                    continue;
                }
                let p = i + 1;
                // SAFETY: padded v rows hold nx+2 entries and p+1 ≤ nx+1;
                // padded u rows hold nx+3 entries.
                let (vc, vn, vs, ve, vw_, ue, uw_) = unsafe {
                    (
                        *vp.get_unchecked(cv + p),
                        *vp.get_unchecked(nv + p),
                        *vp.get_unchecked(sv + p),
                        *vp.get_unchecked(cv + p + 1),
                        *vp.get_unchecked(cv + p - 1),
                        0.5 * (*up.get_unchecked(ur_lo + p + 1) + *up.get_unchecked(ur_hi + p + 1)),
                        0.5 * (*up.get_unchecked(ur_lo + p) + *up.get_unchecked(ur_hi + p)),
                    )
                };
                let bn = 0.5 * (vc + vn);
                let bs = 0.5 * (vs + vc);
                let dv2dy = ((bn * bn - bs * bs) + g * (bn.abs() * 0.5 * (vc - vn) - bs.abs() * 0.5 * (vs - vc))) * idy;
                let duvdx = ((ue * 0.5 * (vc + ve) - uw_ * 0.5 * (vw_ + vc))
                    + g * (ue.abs() * 0.5 * (vc - ve) - uw_.abs() * 0.5 * (vw_ - vc)))
                    * idx;
                let lap = (ve - 2.0 * vc + vw_) * idx2 + (vn - 2.0 * vc + vs) * idy2;
                out[i] = vc + dt * (nu * lap - duvdx - dv2dy);
            }
        }
        if periodic {
            let (top, bottom) = (ny * nx, 0);
            vs_out.copy_within(bottom..bottom + nx, top);
        }
    }

    fn divergence_into(&self, u: &Field2, v: &Field2, out: &mut [f64]) -> f64 {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let (idx, idy) = (1.0 / self.grid.dx(), 1.0 / self.grid.dy());
        let (us, vs) = (u.as_slice(), v.as_slice());
        let solid = self.mask.solid();
        let mut m = 0.0_f64;
        for j in 0..ny {
            let ur = &us[j * (nx + 1)..(j + 1) * (nx + 1)];
            let vlo = &vs[j * nx..(j + 1) * nx];
            let vhi = &vs[(j + 1) * nx..(j + 2) * nx];
            let o = &mut out[j * nx..(j + 1) * nx];
            let s = &solid[j * nx..(j + 1) * nx];
            for i in 0..nx {
                let d = if s[i] { 0.0 } else { (ur[i + 1] - ur[i]) * idx + (vhi[i] - vlo[i]) * idy };
                o[i] = d;
                m = m.max(d.abs());
            }
        }
        m
    }

    /// `u -= ∂φ/∂x`, `v -= ∂φ/∂y` on every face the projection owns.
    fn apply_gradient(&self, phi: &[f64], u: &mut Field2, v: &mut Field2) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let (idx, idy) = (1.0 / self.grid.dx(), 1.0 / self.grid.dy());
        let periodic = self.grid.boundary() == Boundary::Periodic;
        let us = u.as_mut_slice();
        for j in 0..ny {
            let ph = &phi[j * nx..(j + 1) * nx];
            let row = &mut us[j * (nx + 1)..(j + 1) * (nx + 1)];
            let open = &self.u_open[j * (nx + 1)..(j + 1) * (nx + 1)];
            if periodic {
                row[0] -= (ph[0] - ph[nx - 1]) * idx;
                row[nx] = row[0];
            } else if !self.mask.is_solid(nx - 1, j) {
                row[nx] += 2.0 * ph[nx - 1] * idx;
            }
            for i in 1..nx {
                if open[i] {
                    row[i] -= (ph[i] - ph[i - 1]) * idx;
                }
            }
        }
        let vs = v.as_mut_slice();
        for j in 0..ny {
            let (lo, hi) = if j == 0 { (ny - 1, 0) } else { (j - 1, j) };
            if j == 0 && !periodic {
                continue;
            }
            let open = &self.v_open[j * nx..(j + 1) * nx];
            for i in 0..nx {
                if open[i] {
                    vs[j * nx + i] -= (phi[hi * nx + i] - phi[lo * nx + i]) * idy;
                }
            }
        }
        if periodic {
            vs.copy_within(0..nx, ny * nx);
        }
    }

    /// Max-norm divergence of `(u, v)` over fluid cells.
    pub fn max_divergence(&self, u: &Field2, v: &Field2) -> f64 {
        let mut scratch = vec![0.0; self.grid.cell_count()];
        self.divergence_into(u, v, &mut scratch)
    }

    /// Projects `(u, v)` in place onto the discretely divergence-free space
    /// and returns the pressure that did it.
    pub fn project(&mut self, u: &mut Field2, v: &mut Field2) -> Result<Field2> {
        if !u.is_finite() || !v.is_finite() {
            return Err(Error::NonFinite("predictor velocity"));
        }
        if u.dims() != self.grid.u_dims() {
            return Err(Error::ShapeMismatch {
                field: "u",
                expected: self.grid.u_dims(),
                got: u.dims(),
            });
        }
        if v.dims() != self.grid.v_dims() {
            return Err(Error::ShapeMismatch {
                field: "v",
                expected: self.grid.v_dims(),
                got: v.dims(),
            });
        }
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let bound = self.divergence_bound();
        let scale = self.fs.rho / self.cfg.dt;
        let mut p = Field2::zeros(nx, ny);
        let mut rhs = std::mem::take(&mut self.rhs);
        let mut phi = std::mem::take(&mut self.phi);
        let mut div = self.divergence_into(u, v, &mut rhs);
        for _ in 0..self.cfg.n_correctors {
            if div <= bound {
                break;
            }
            if let Err(e) = self.pressure.solve_direct(&mut rhs, &mut phi) {
                self.rhs = rhs;
                self.phi = phi;
                return Err(e);
            }
            self.apply_gradient(&phi, u, v);
            for (pv, f) in p.as_mut_slice().iter_mut().zip(&phi) {
                *pv += f * scale;
            }
            div = self.divergence_into(u, v, &mut rhs);
        }
        self.rhs = rhs;
        self.phi = phi;
        if div > bound {
            return Err(Error::PoissonNotConverged { residual: div / bound * self.cfg.poisson_tol });
        }
        Ok(p)
    }

    fn transport_k(&mut self, state: &FlowState) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let (idx, idy) = (1.0 / self.grid.dx(), 1.0 / self.grid.dy());
        let dt = self.cfg.dt;
        let k_inf = self.fs.k_inf;
        let rate = self.fs.u_inf / self.grid.lx();
        let periodic = self.grid.boundary() == Boundary::Periodic;
        let k = state.k.as_slice();
        let (us, vs) = (state.u.as_slice(), state.v.as_slice());
        let solid = self.mask.solid();
        let out = self.k_new.as_mut_slice();
        let flux = |vel: f64, behind: f64, ahead: f64| if vel > 0.0 { vel * behind } else { vel * ahead };
        for j in 0..ny {
            let row = &k[j * nx..(j + 1) * nx];
            // Rows below and above; closed walls reuse the row itself, where
            // the normal velocity is zero anyway.
            let south = if j > 0 {
                &k[(j - 1) * nx..j * nx]
            } else if periodic {
                &k[(ny - 1) * nx..ny * nx]
            } else {
                row
            };
            let north = if j + 1 < ny {
                &k[(j + 1) * nx..(j + 2) * nx]
            } else if periodic {
                &k[0..nx]
            } else {
                row
            };
            let ur = &us[j * (nx + 1)..(j + 1) * (nx + 1)];
            let vlo = &vs[j * nx..(j + 1) * nx];
            let vhi = &vs[(j + 1) * nx..(j + 2) * nx];
            let s = &solid[j * nx..(j + 1) * nx];
            let o = &mut out[j * nx..(j + 1) * nx];
            for i in 0..nx {
                if s[i] {
                    o[i] = k_inf;
                    continue;
                }
                let kc = row[i];
                let kw = if i > 0 {
                    row[i - 1]
                } else if periodic {
                    row[nx - 1]
                } else {
                    k_inf
                };
                let ke = if i + 1 < nx {
                    row[i + 1]
                } else if periodic {
                    row[0]
                } else {
                    kc
                };
                let fe = flux(ur[i + 1], kc, ke);
                let fw = flux(ur[i], kw, kc);
                let fn_ = flux(vhi[i], kc, north[i]);
                let fs_ = flux(vlo[i], south[i], kc);
                let next = kc - dt * ((fe - fw) * idx + (fn_ - fs_) * idy) - dt * rate * (kc - k_inf);
                o[i] = next.max(0.0);
            }
        }
    }

    /// Advances `state` by one timestep in place.
    pub fn step(&mut self, state: &mut FlowState) -> Result<()> {
        let (cfl, ci, cj) = cfl_number(state, &self.grid, self.cfg.dt);
        if !cfl.is_finite() {
            return Err(Error::NonFinite("velocity"));
        }
        if cfl > self.cfg.cfl_limit {
            return Err(Error::CflViolation {
                cfl,
                limit: self.cfg.cfl_limit,
                i: ci,
                j: cj,
            });
        }
        let mut u_star = std::mem::replace(&mut self.u_star, Field2::zeros(0, 0));
        let mut v_star = std::mem::replace(&mut self.v_star, Field2::zeros(0, 0));
        u_star.as_mut_slice().copy_from_slice(state.u.as_slice());
        v_star.as_mut_slice().copy_from_slice(state.v.as_slice());
        self.predict(state, cfl.min(1.0), &mut u_star, &mut v_star);
        let projected = self.project(&mut u_star, &mut v_star);
        let p = match projected {
            Ok(p) => p,
            Err(e) => {
                self.u_star = u_star;
                self.v_star = v_star;
                return Err(e);
            }
        };
        std::mem::swap(&mut state.u, &mut u_star);
        std::mem::swap(&mut state.v, &mut v_star);
        self.u_star = u_star;
        self.v_star = v_star;
        state.p = p;
        self.transport_k(state);
        std::mem::swap(&mut state.k, &mut self.k_new);
        state.t += self.cfg.dt;
        apply_boundary_conditions(state, &self.grid, &self.fs, &self.mask)?;
        debug_assert!(self.max_divergence(&state.u, &state.v) <= self.divergence_bound());
        Ok(())
    }

    /// Marches from `state0` to `cfg.t_end`, sampling forces every
    /// `sample_every` steps.
    pub fn run(&mut self, state0: &FlowState, opts: &RunOptions) -> Result<RunOutput> {
        state0.validate(&self.grid)?;
        let t0 = state0.t;
        let dt = self.cfg.dt;
        let span = self.cfg.t_end - t0;
        let steps = if span > 0.0 { (span / dt + 1e-9).floor() as usize } else { 0 };
        let mut state = state0.clone();
        let mut series = ForceSeries::default();
        let mut snaps: Vec<(f64, bool)> = opts.snapshot_times.iter().map(|&t| (t, false)).collect();
        let mut snapshots = Vec::new();
        let mut acc: Option<(FlowState, usize)> = None;
        let has_obstacle = !self.mask.is_empty();
        for n in 1..=steps {
            let t = t0 + n as f64 * dt;
            self.step(&mut state).map_err(|e| e.at_time(t))?;
            state.t = t;
            if n % self.cfg.sample_every == 0 {
                let (fx, fy) = if has_obstacle {
                    compute_force(&state, &self.grid, &self.mask, &self.fs)?
                } else {
                    (0.0, 0.0)
                };
                if !(fx.is_finite() && fy.is_finite()) {
                    return Err(Error::NonFinite("force").at_time(t));
                }
                series.push(t, fx, fy)?;
            }
            for (ts, done) in snaps.iter_mut() {
                if !*done && t >= *ts - 0.5 * dt {
                    *done = true;
                    snapshots.push(state.clone());
                }
            }
            if let Some(from) = opts.average_from {
                if t >= from {
                    match &mut acc {
                        None => acc = Some((state.clone(), 1)),
                        Some((sum, count)) => {
                            add_into(sum, &state);
                            *count += 1;
                        }
                    }
                }
            }
            if n % 2000 == 0 {
                debug!("t = {t:.5} ({n}/{steps} steps)");
            }
        }
        let average = acc.map(|(mut sum, count)| {
            let inv = 1.0 / count as f64;
            for f in [&mut sum.u, &mut sum.v, &mut sum.p, &mut sum.k] {
                f.as_mut_slice().iter_mut().for_each(|x| *x *= inv);
            }
            sum.t = state.t;
            sum
        });
        Ok(RunOutput {
            series,
            snapshots,
            average,
            final_state: state,
            steps,
        })
    }
}

fn add_into(sum: &mut FlowState, s: &FlowState) {
    for (a, b) in [(&mut sum.u, &s.u), (&mut sum.v, &s.v), (&mut sum.p, &s.p), (&mut sum.k, &s.k)] {
        a.as_mut_slice().iter_mut().zip(b.as_slice()).for_each(|(x, y)| *x += y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, rasterize_obstacle, GridSpec, ShapeSpec};

    fn fs() -> FreestreamConditions {
        FreestreamConditions::new(1.0, 1.0, 0.01, 0.01, 1.0).unwrap()
    }

    fn uniform(g: &Grid, f: &FreestreamConditions) -> FlowState {
        let mut s = FlowState::zeros(g);
        s.u.fill(f.u_inf);
        s.k.fill(f.k_inf);
        s
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(0.01, 1.0).validate().is_ok());
        assert!(SolverConfig::new(0.0, 1.0).validate().is_err());
        assert!(SolverConfig::new(0.1, 0.05).validate().is_err());
        let mut c = SolverConfig::new(0.01, 1.0);
        c.cfl_limit = 1.5;
        assert!(c.validate().is_err());
        c.cfl_limit = 0.9;
        c.sample_every = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn uniform_flow_is_steady() {
        let g = make_grid(GridSpec::new(32, 16, 4.0, 2.0)).unwrap();
        let f = fs();
        let mask = ObstacleMask::none(&g);
        let mut solver = TransientSolver::new(&g, &mask, &f, &SolverConfig::new(0.01, 1.0)).unwrap();
        let mut s = uniform(&g, &f);
        let before = s.clone();
        solver.step(&mut s).unwrap();
        for (a, b) in s.u.as_slice().iter().zip(before.u.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(s.v.max_abs() < 1e-10);
        assert!(s.p.max_abs() < 1e-10);
        assert!((s.t - 0.01).abs() < 1e-15);
    }

    #[test]
    fn cfl_is_linear_in_dt() {
        let g = make_grid(GridSpec::new(32, 16, 4.0, 2.0)).unwrap();
        let f = fs();
        let s = uniform(&g, &f);
        let (c1, _, _) = cfl_number(&s, &g, 0.01);
        assert_eq!(c1, f.u_inf * 0.01 / g.dx());
        let (c2, _, _) = cfl_number(&s, &g, 0.02);
        assert_eq!(c2, 2.0 * c1);
        assert_eq!(cfl_number(&FlowState::zeros(&g), &g, 0.01).0, 0.0);
    }

    #[test]
    fn cfl_violation_names_cell() {
        let g = make_grid(GridSpec::new(32, 16, 4.0, 2.0)).unwrap();
        let f = fs();
        let mask = ObstacleMask::none(&g);
        let dt = 1.2 * g.dx() / f.u_inf;
        let mut solver = TransientSolver::new(&g, &mask, &f, &SolverConfig::new(dt, 1.0)).unwrap();
        let mut s = uniform(&g, &f);
        match solver.step(&mut s) {
            Err(Error::CflViolation { cfl, i, j, .. }) => {
                assert!((cfl - 1.2).abs() < 1e-12);
                assert!(i < 32 && j < 16);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn projection_of_divergence_free_field_is_identity() {
        let g = make_grid(GridSpec::new(32, 16, 4.0, 2.0)).unwrap();
        let f = fs();
        let mask = ObstacleMask::none(&g);
        let mut solver = TransientSolver::new(&g, &mask, &f, &SolverConfig::new(0.01, 1.0)).unwrap();
        let mut s = uniform(&g, &f);
        let (mut u, mut v) = (s.u.clone(), s.v.clone());
        let p = solver.project(&mut u, &mut v).unwrap();
        assert_eq!(u, s.u);
        assert_eq!(v, s.v);
        assert!(p.max_abs() <= 1e-7);
        s.u.as_mut_slice()[40] = f64::NAN;
        let (mut u, mut v) = (s.u.clone(), s.v.clone());
        assert!(matches!(solver.project(&mut u, &mut v), Err(Error::NonFinite(_))));
    }

    #[test]
    fn constant_pressure_exerts_no_force() {
        let g = make_grid(GridSpec::new(64, 32, 8.0, 4.0)).unwrap();
        let f = fs();
        let mask = rasterize_obstacle(
            &g,
            &ShapeSpec::Circle {
                cx: 2.0,
                cy: 2.0,
                radius: 0.6,
            },
        )
        .unwrap();
        let mut s = FlowState::zeros(&g);
        s.p.fill(37.5);
        let (fx, fy) = compute_force(&s, &g, &mask, &f).unwrap();
        assert!(fx.abs() < 1e-10 && fy.abs() < 1e-10, "{fx} {fy}");
        let zero = FlowState::zeros(&g);
        assert_eq!(compute_force(&zero, &g, &mask, &f).unwrap(), (0.0, 0.0));
        assert!(matches!(
            compute_force(&zero, &g, &ObstacleMask::none(&g), &f),
            Err(Error::EmptyObstacle)
        ));
    }

    #[test]
    fn total_pressure_of_uniform_and_zero_states() {
        let g = make_grid(GridSpec::new(16, 8, 2.0, 1.0)).unwrap();
        let f = FreestreamConditions::new(38.889, 1.225, 1.5e-5, 0.24, 2.88).unwrap();
        let p0 = total_pressure(&uniform(&g, &f), &f);
        let expected = 0.5 * 1.225 * 38.889 * 38.889;
        assert!((expected - 926.3_f64).abs() < 0.1);
        assert!(p0.as_slice().iter().all(|&v| (v - expected).abs() < 1e-9));
        assert!(total_pressure(&FlowState::zeros(&g), &f).max_abs() == 0.0);
    }

    #[test]
    fn zero_horizon_run_is_empty() {
        let g = make_grid(GridSpec::new(32, 16, 4.0, 2.0)).unwrap();
        let f = fs();
        let mask = rasterize_obstacle(
            &g,
            &ShapeSpec::Rectangle {
                cx: 1.0,
                cy: 1.0,
                width: 0.5,
                height: 0.5,
            },
        )
        .unwrap();
        let mut s = uniform(&g, &f);
        s.t = 1.0;
        let mut solver = TransientSolver::new(&g, &mask, &f, &SolverConfig::new(0.01, 1.0)).unwrap();
        let out = solver.run(&s, &RunOptions::default()).unwrap();
        assert!(out.series.is_empty());
        assert_eq!(out.steps, 0);
    }

    #[test]
    fn series_rejects_non_increasing_time() {
        let mut s = ForceSeries::default();
        s.push(0.1, 1.0, 0.0).unwrap();
        assert!(s.push(0.1, 1.0, 0.0).is_err());
    }
}
