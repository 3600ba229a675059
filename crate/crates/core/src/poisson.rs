//! Pressure Poisson solvers on the masked cell-centred grid.
//!
//! The channel solver diagonalises the obstacle-free operator with a
//! cosine transform in `y` and a tridiagonal sweep in `x`, then restores
//! the obstacle through a capacitance (Woodbury) correction whose size is
//! the number of cells on either side of the solid surface. The periodic
//! solver is a plain 2D FFT and exists for verification runs.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid, ObstacleMask};

/// Largest capacitance system assembled before giving up on the direct path.
const MAX_CAPACITANCE: usize = 6000;
const REFINE_THRESHOLD: f64 = 1e-11;

/// Applies the masked 5-point Laplacian used by the projection.
///
/// Closed faces (inlet, slip walls, solid faces) carry zero flux; the
/// outlet face of a channel holds `φ = 0` half a cell outside the last
/// column. Solid cells produce zero.
pub fn apply_laplacian(grid: &Grid, mask: &ObstacleMask, phi: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ax, ay) = (1.0 / (grid.dx() * grid.dx()), 1.0 / (grid.dy() * grid.dy()));
    let periodic = grid.boundary() == Boundary::Periodic;
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            if mask.is_solid(i, j) {
                out[c] = 0.0;
                continue;
            }
            let pc = phi[c];
            let mut acc = 0.0;
            // west
            if i > 0 {
                if !mask.is_solid(i - 1, j) {
                    acc += ax * (phi[c - 1] - pc);
                }
            } else if periodic {
                acc += ax * (phi[c + nx - 1] - pc);
            }
            // east
            if i + 1 < nx {
                if !mask.is_solid(i + 1, j) {
                    acc += ax * (phi[c + 1] - pc);
                }
            } else if periodic {
                acc += ax * (phi[c + 1 - nx] - pc);
            } else {
                acc -= 2.0 * ax * pc;
            }
            // south
            if j > 0 {
                if !mask.is_solid(i, j - 1) {
                    acc += ay * (phi[c - nx] - pc);
                }
            } else if periodic {
                acc += ay * (phi[c + (ny - 1) * nx] - pc);
            }
            // north
            if j + 1 < ny {
                if !mask.is_solid(i, j + 1) {
                    acc += ay * (phi[c + nx] - pc);
                }
            } else if periodic {
                acc += ay * (phi[c - (ny - 1) * nx] - pc);
            }
            out[c] = acc;
        }
    }
}

/// Direct solver for the projection's pressure equation.
pub struct PressureSolver {
    kind: Kind,
    grid: Grid,
    mask: ObstacleMask,
    residual_buf: Vec<f64>,
}

enum Kind {
    Channel(Box<ChannelSolver>),
    Periodic(Box<PeriodicSolver>),
}

impl PressureSolver {
    pub fn new(grid: &Grid, mask: &ObstacleMask) -> Result<Self> {
        let kind = match grid.boundary() {
            Boundary::Channel => Kind::Channel(Box::new(ChannelSolver::new(grid, mask)?)),
            Boundary::Periodic => {
                if !mask.is_empty() {
                    return Err(Error::InvalidShape(
                        "obstacles are not supported in periodic domains".into(),
                    ));
                }
                Kind::Periodic(Box::new(PeriodicSolver::new(grid)))
            }
        };
        Ok(Self {
            kind,
            grid: grid.clone(),
            mask: mask.clone(),
            residual_buf: vec![0.0; grid.cell_count()],
        })
    }

    /// Solves `L φ = rhs` and returns the relative max-norm residual.
    ///
    /// Solid-cell entries of `rhs` are ignored; solid entries of `phi` are
    /// set to zero. In periodic domains the mean of `rhs` is removed and the
    /// zero-mean solution is returned.
    pub fn solve(&mut self, rhs: &[f64], phi: &mut [f64]) -> Result<f64> {
        let mut b = rhs.to_vec();
        if !self.prepare(&mut b)? {
            phi.fill(0.0);
            return Ok(0.0);
        }
        let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        self.raw_solve(&b, phi);
        let mut res = self.residual(&b, phi) / scale;
        if res > REFINE_THRESHOLD {
            let r: Vec<f64> = self.residual_vec(&b, phi);
            let mut corr = vec![0.0; phi.len()];
            self.raw_solve(&r, &mut corr);
            phi.iter_mut().zip(&corr).for_each(|(p, c)| *p += c);
            res = self.residual(&b, phi) / scale;
        }
        if !res.is_finite() {
            return Err(Error::PoissonNotConverged { residual: res });
        }
        Ok(res)
    }

    /// One direct solve without the residual check or refinement; callers
    /// that measure their own residual use this on the hot path. `rhs` is
    /// overwritten with the right-hand side actually solved.
    pub fn solve_direct(&mut self, rhs: &mut [f64], phi: &mut [f64]) -> Result<()> {
        if !self.prepare(rhs)? {
            phi.fill(0.0);
            return Ok(());
        }
        self.raw_solve(rhs, phi);
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::PoissonNotConverged { residual: f64::INFINITY });
        }
        Ok(())
    }

    /// Zeroes solid entries and removes the periodic mean. Returns false
    /// for an all-zero right-hand side.
    fn prepare(&self, b: &mut [f64]) -> Result<bool> {
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pressure right-hand side"));
        }
        for (v, &s) in b.iter_mut().zip(self.mask.solid()) {
            if s {
                *v = 0.0;
            }
        }
        if let Kind::Periodic(_) = self.kind {
            let mean = b.iter().sum::<f64>() / b.len() as f64;
            b.iter_mut().for_each(|v| *v -= mean);
        }
        Ok(b.iter().any(|&v| v != 0.0))
    }

    fn raw_solve(&mut self, b: &[f64], phi: &mut [f64]) {
        match &mut self.kind {
            Kind::Channel(s) => s.solve(b, phi),
            Kind::Periodic(s) => s.solve(b, phi),
        }
        for (v, &s) in phi.iter_mut().zip(self.mask.solid()) {
            if s {
                *v = 0.0;
            }
        }
    }

    fn residual_vec(&mut self, b: &[f64], phi: &[f64]) -> Vec<f64> {
        apply_laplacian(&self.grid, &self.mask, phi, &mut self.residual_buf);
        b.iter().zip(&self.residual_buf).map(|(b, l)| b - l).collect()
    }

    fn residual(&mut self, b: &[f64], phi: &[f64]) -> f64 {
        apply_laplacian(&self.grid, &self.mask, phi, &mut self.residual_buf);
        b.iter()
            .zip(&self.residual_buf)
            .fold(0.0_f64, |m, (b, l)| m.max((b - l).abs()))
    }
}

/// Obstacle-free channel operator: Neumann in `y`, Neumann inlet and
/// half-cell Dirichlet outlet in `x`.
///
/// Columns are transformed two at a time, packed into the real and
/// imaginary parts of one complex FFT, and all column pairs go through a
/// single batched FFT call.
struct FastChannel {
    nx: usize,
    ny: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    twiddle: Vec<Complex64>,
    /// Position of sample `j` in the even/odd reordered sequence.
    perm: Vec<usize>,
    batch: Vec<Complex64>,
    scratch: Vec<Complex64>,
    hat: Vec<f64>,
    // Thomas coefficients per mode, laid out [mode * nx + i].
    cprime: Vec<f64>,
    inv_denom: Vec<f64>,
    ax: f64,
}

impl FastChannel {
    fn new(grid: &Grid) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let ax = 1.0 / (grid.dx() * grid.dx());
        let ay = 1.0 / (grid.dy() * grid.dy());
        let mut cprime = vec![0.0; nx * ny];
        let mut inv_denom = vec![0.0; nx * ny];
        for m in 0..ny {
            let lambda = -ay * (2.0 - 2.0 * (std::f64::consts::PI * m as f64 / ny as f64).cos());
            let diag = |i: usize| {
                let base = if i == 0 {
                    -ax
                } else if i == nx - 1 {
                    -3.0 * ax
                } else {
                    -2.0 * ax
                };
                base + lambda
            };
            let row = m * nx;
            let mut prev_c = 0.0;
            for i in 0..nx {
                let denom = if i == 0 { diag(0) } else { diag(i) - ax * prev_c };
                let c = if i + 1 < nx { ax / denom } else { 0.0 };
                cprime[row + i] = c;
                inv_denom[row + i] = 1.0 / denom;
                prev_c = c;
            }
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(ny);
        let ifft = planner.plan_fft_inverse(ny);
        let scratch_len = fft.get_inplace_scratch_len().max(ifft.get_inplace_scratch_len());
        let twiddle = (0..ny)
            .map(|m| Complex64::from_polar(1.0, -std::f64::consts::PI * m as f64 / (2 * ny) as f64))
            .collect();
        let perm = (0..ny)
            .map(|j| if j % 2 == 0 { j / 2 } else { ny - 1 - j / 2 })
            .collect();
        let pairs = nx.div_ceil(2);
        Self {
            nx,
            ny,
            fft,
            ifft,
            twiddle,
            perm,
            batch: vec![Complex64::new(0.0, 0.0); pairs * ny],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            hat: vec![0.0; nx * ny],
            cprime,
            inv_denom,
            ax,
        }
    }

    fn solve(&mut self, b: &[f64], x: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let pairs = nx.div_ceil(2);
        let odd = nx % 2 == 1;
        let batch = &mut self.batch;
        for j in 0..ny {
            let row = &b[j * nx..(j + 1) * nx];
            let pos = self.perm[j];
            for q in 0..pairs {
                let re = row[2 * q];
                let im = if odd && q + 1 == pairs { 0.0 } else { row[2 * q + 1] };
                batch[q * ny + pos] = Complex64::new(re, im);
            }
        }
        self.fft.process_with_scratch(batch, &mut self.scratch);
        for q in 0..pairs {
            let v = &batch[q * ny..(q + 1) * ny];
            let has_b = !(odd && q + 1 == pairs);
            for m in 0..ny {
                let vm = v[m];
                let vc = v[(ny - m) % ny].conj();
                let w = self.twiddle[m];
                let a = (vm + vc) * 0.5;
                self.hat[m * nx + 2 * q] = (w * a).re;
                if has_b {
                    let bb = (vm - vc) * Complex64::new(0.0, -0.5);
                    self.hat[m * nx + 2 * q + 1] = (w * bb).re;
                }
            }
        }
        let ax = self.ax;
        for m in 0..ny {
            let row = m * nx;
            let r = &mut self.hat[row..row + nx];
            let cp = &self.cprime[row..row + nx];
            let inv = &self.inv_denom[row..row + nx];
            r[0] *= inv[0];
            for i in 1..nx {
                r[i] = (r[i] - ax * r[i - 1]) * inv[i];
            }
            for i in (0..nx - 1).rev() {
                r[i] -= cp[i] * r[i + 1];
            }
        }
        let hat = &self.hat;
        for q in 0..pairs {
            let (ia, ib) = (2 * q, 2 * q + 1);
            let has_b = !(odd && q + 1 == pairs);
            let out = &mut batch[q * ny..(q + 1) * ny];
            let xa0 = hat[ia];
            let xb0 = if has_b { hat[ib] } else { 0.0 };
            out[0] = Complex64::new(xa0, xb0);
            for m in 1..ny {
                let tc = self.twiddle[m].conj();
                let za = Complex64::new(hat[m * nx + ia], -hat[(ny - m) * nx + ia]) * tc;
                let zb = if has_b {
                    Complex64::new(hat[m * nx + ib], -hat[(ny - m) * nx + ib]) * tc
                } else {
                    Complex64::new(0.0, 0.0)
                };
                out[m] = za + Complex64::new(-zb.im, zb.re);
            }
        }
        self.ifft.process_with_scratch(batch, &mut self.scratch);
        let scale = 1.0 / ny as f64;
        for j in 0..ny {
            let row = &mut x[j * nx..(j + 1) * nx];
            let pos = self.perm[j];
            for q in 0..pairs {
                let z = batch[q * ny + pos];
                row[2 * q] = z.re * scale;
                if !(odd && q + 1 == pairs) {
                    row[2 * q + 1] = z.im * scale;
                }
            }
        }
    }
}

/// Unnormalised DCT-II, `X_m = Σ_n x_n cos(π m (2n+1) / 2N)`, and its exact
/// inverse, computed through one complex FFT of length `N`. Reference for
/// the batched transform in the tests.
#[cfg(test)]
struct Dct {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    twiddle: Vec<Complex64>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

#[cfg(test)]
impl Dct {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let twiddle = (0..n)
            .map(|m| Complex64::from_polar(1.0, -std::f64::consts::PI * m as f64 / (2 * n) as f64))
            .collect();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let scratch_len = fft.get_inplace_scratch_len().max(ifft.get_inplace_scratch_len());
        Self {
            n,
            fft,
            ifft,
            twiddle,
            buf: vec![Complex64::new(0.0, 0.0); n],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    fn forward(&mut self, x: &mut [f64]) {
        let n = self.n;
        for k in 0..n.div_ceil(2) {
            self.buf[k] = Complex64::new(x[2 * k], 0.0);
        }
        for k in 0..n / 2 {
            self.buf[n - 1 - k] = Complex64::new(x[2 * k + 1], 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for m in 0..n {
            x[m] = (self.twiddle[m] * self.buf[m]).re;
        }
    }

    fn inverse(&mut self, x: &mut [f64]) {
        let n = self.n;
        self.buf[0] = Complex64::new(x[0], 0.0);
        for m in 1..n {
            self.buf[m] = Complex64::new(x[m], -x[n - m]) * self.twiddle[m].conj();
        }
        self.ifft.process_with_scratch(&mut self.buf, &mut self.scratch);
        let scale = 1.0 / n as f64;
        for k in 0..n.div_ceil(2) {
            x[2 * k] = self.buf[k].re * scale;
        }
        for k in 0..n / 2 {
            x[2 * k + 1] = self.buf[n - 1 - k].re * scale;
        }
    }
}

struct ChannelSolver {
    fast: FastChannel,
    /// Cell indices whose rows differ between the masked and full operator.
    rows: Vec<usize>,
    /// Sparse difference rows `E = A_masked − A_full`.
    delta: Vec<Vec<(usize, f64)>>,
    capacitance: Option<DenseLu>,
    y: Vec<f64>,
    b2: Vec<f64>,
}

impl ChannelSolver {
    fn new(grid: &Grid, mask: &ObstacleMask) -> Result<Self> {
        let mut fast = FastChannel::new(grid);
        let (nx, ny) = (grid.nx(), grid.ny());
        let ax = 1.0 / (grid.dx() * grid.dx());
        let ay = 1.0 / (grid.dy() * grid.dy());
        let n = nx * ny;
        let mut rows = Vec::new();
        let mut delta = Vec::new();
        if !mask.is_empty() {
            let neighbours = |i: usize, j: usize| {
                let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(4);
                if i > 0 {
                    out.push((i - 1, j, ax));
                }
                if i + 1 < nx {
                    out.push((i + 1, j, ax));
                }
                if j > 0 {
                    out.push((i, j - 1, ay));
                }
                if j + 1 < ny {
                    out.push((i, j + 1, ay));
                }
                out
            };
            let full_diag = |i: usize, j: usize| {
                let mut d = 0.0;
                for (_, _, w) in neighbours(i, j) {
                    d -= w;
                }
                if i + 1 == nx {
                    d -= 2.0 * ax;
                }
                d
            };
            let ring_diag = -2.0 * (ax + ay);
            for j in 0..ny {
                for i in 0..nx {
                    let c = j * nx + i;
                    let nbs = neighbours(i, j);
                    if mask.is_solid(i, j) {
                        let on_ring = nbs.iter().any(|&(a, b, _)| !mask.is_solid(a, b));
                        if on_ring {
                            // Replace the row by `ring_diag · e_c`.
                            let mut e = vec![(c, ring_diag - full_diag(i, j))];
                            for &(a, b, w) in &nbs {
                                e.push((b * nx + a, -w));
                            }
                            rows.push(c);
                            delta.push(e);
                        }
                    } else {
                        let mut e: Vec<(usize, f64)> = Vec::new();
                        let mut dd = 0.0;
                        for &(a, b, w) in &nbs {
                            if mask.is_solid(a, b) {
                                e.push((b * nx + a, -w));
                                dd += w;
                            }
                        }
                        if !e.is_empty() {
                            e.push((c, dd));
                            rows.push(c);
                            delta.push(e);
                        }
                    }
                }
            }
        }
        let r = rows.len();
        if r > MAX_CAPACITANCE {
            return Err(Error::InvalidShape(format!(
                "obstacle surface too large for the direct pressure solver ({r} rows)"
            )));
        }
        let capacitance = if r > 0 {
            let mut c = vec![0.0; r * r];
            let mut unit = vec![0.0; n];
            let mut col = vec![0.0; n];
            for (k, &row) in rows.iter().enumerate() {
                unit[row] = 1.0;
                fast.solve(&unit, &mut col);
                unit[row] = 0.0;
                for (q, e) in delta.iter().enumerate() {
                    let s: f64 = e.iter().map(|&(idx, w)| w * col[idx]).sum();
                    c[q * r + k] = s + if q == k { 1.0 } else { 0.0 };
                }
            }
            Some(DenseLu::factor(r, c).ok_or(Error::PoissonNotConverged { residual: f64::INFINITY })?)
        } else {
            None
        };
        Ok(Self {
            fast,
            rows,
            delta,
            capacitance,
            y: vec![0.0; n],
            b2: vec![0.0; n],
        })
    }

    fn solve(&mut self, b: &[f64], x: &mut [f64]) {
        let Some(lu) = &self.capacitance else {
            self.fast.solve(b, x);
            return;
        };
        self.fast.solve(b, &mut self.y);
        let mut w: Vec<f64> = self
            .delta
            .iter()
            .map(|e| e.iter().map(|&(idx, wt)| wt * self.y[idx]).sum())
            .collect();
        lu.solve_in_place(&mut w);
        self.b2.copy_from_slice(b);
        for (&row, z) in self.rows.iter().zip(&w) {
            self.b2[row] -= z;
        }
        self.fast.solve(&self.b2, x);
    }
}

/// LU factorisation with partial pivoting.
struct DenseLu {
    n: usize,
    a: Vec<f64>,
    perm: Vec<usize>,
}

impl DenseLu {
    fn factor(n: usize, mut a: Vec<f64>) -> Option<Self> {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut piv, mut best) = (k, a[k * n + k].abs());
            for r in k + 1..n {
                let v = a[r * n + k].abs();
                if v > best {
                    piv = r;
                    best = v;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            if piv != k {
                for c in 0..n {
                    a.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
            }
            let d = a[k * n + k];
            for r in k + 1..n {
                let f = a[r * n + k] / d;
                a[r * n + k] = f;
                if f != 0.0 {
                    let (top, bottom) = a.split_at_mut(r * n);
                    let src = &top[k * n + k + 1..k * n + n];
                    let dst = &mut bottom[k + 1..n];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d -= f * s;
                    }
                }
            }
        }
        Some(Self { n, a, perm })
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let row = &self.a[r * n..r * n + r];
            let s: f64 = row.iter().zip(&x[..r]).map(|(a, x)| a * x).sum();
            x[r] -= s;
        }
        for r in (0..n).rev() {
            let row = &self.a[r * n + r + 1..r * n + n];
            let s: f64 = row.iter().zip(&x[r + 1..]).map(|(a, x)| a * x).sum();
            x[r] = (x[r] - s) / self.a[r * n + r];
        }
        b.copy_from_slice(&x);
    }
}

struct PeriodicSolver {
    nx: usize,
    ny: usize,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
    eig: Vec<f64>,
    buf: Vec<Complex64>,
    col: Vec<Complex64>,
}

impl PeriodicSolver {
    fn new(grid: &Grid) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut planner = FftPlanner::new();
        let ax = 1.0 / (grid.dx() * grid.dx());
        let ay = 1.0 / (grid.dy() * grid.dy());
        let tau = 2.0 * std::f64::consts::PI;
        let mut eig = vec![0.0; nx * ny];
        for l in 0..ny {
            for k in 0..nx {
                eig[l * nx + k] = -ax * (2.0 - 2.0 * (tau * k as f64 / nx as f64).cos())
                    - ay * (2.0 - 2.0 * (tau * l as f64 / ny as f64).cos());
            }
        }
        Self {
            nx,
            ny,
            fft_x: planner.plan_fft_forward(nx),
            ifft_x: planner.plan_fft_inverse(nx),
            fft_y: planner.plan_fft_forward(ny),
            ifft_y: planner.plan_fft_inverse(ny),
            eig,
            buf: vec![Complex64::new(0.0, 0.0); nx * ny],
            col: vec![Complex64::new(0.0, 0.0); ny],
        }
    }

    fn solve(&mut self, b: &[f64], x: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for (c, v) in self.buf.iter_mut().zip(b) {
            *c = Complex64::new(*v, 0.0);
        }
        self.fft_x.process(&mut self.buf);
        self.columns(true);
        for (c, e) in self.buf.iter_mut().zip(&self.eig) {
            *c = if *e == 0.0 { Complex64::new(0.0, 0.0) } else { *c / *e };
        }
        self.columns(false);
        self.ifft_x.process(&mut self.buf);
        let norm = 1.0 / (nx * ny) as f64;
        for (xv, c) in x.iter_mut().zip(&self.buf) {
            *xv = c.re * norm;
        }
    }

    fn columns(&mut self, forward: bool) {
        let (nx, ny) = (self.nx, self.ny);
        let plan = if forward { &self.fft_y } else { &self.ifft_y };
        for i in 0..nx {
            for j in 0..ny {
                self.col[j] = self.buf[j * nx + i];
            }
            plan.process(&mut self.col);
            for j in 0..ny {
                self.buf[j * nx + i] = self.col[j];
            }
        }
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub iterations: usize,
    pub converged: bool,
    /// Relative residual after each iteration.
    pub history: Vec<f64>,
}

/// Jacobi-preconditioned conjugate gradient for a symmetric negative
/// semi-definite operator restricted to `active` entries.
///
/// When `remove_mean` is set the iteration is kept orthogonal to the
/// constant vector over active entries, which handles the pure-Neumann
/// null space.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    active: &[bool],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
    remove_mean: bool,
) -> CgOutcome {
    let n = b.len();
    let count = active.iter().filter(|&&a| a).count().max(1) as f64;
    let project = |v: &mut [f64]| {
        if remove_mean {
            let mean: f64 = v.iter().zip(active).filter(|(_, &a)| a).map(|(v, _)| *v).sum::<f64>() / count;
            for (v, &a) in v.iter_mut().zip(active) {
                if a {
                    *v -= mean;
                }
            }
        }
        for (v, &a) in v.iter_mut().zip(active) {
            if !a {
                *v = 0.0;
            }
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| a * b).sum::<f64>();
    let norm = |a: &[f64]| a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    let mut bb = b.to_vec();
    project(&mut bb);
    let bnorm = norm(&bb);
    let mut history = Vec::new();
    if bnorm == 0.0 {
        x.fill(0.0);
        return CgOutcome {
            iterations: 0,
            converged: true,
            history,
        };
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = bb.iter().zip(&ax).map(|(b, a)| b - a).collect();
    project(&mut r);
    let precond = |r: &[f64], z: &mut [f64]| {
        for ((z, r), (&d, &a)) in z.iter_mut().zip(r).zip(diag.iter().zip(active)) {
            *z = if a && d != 0.0 { r / d } else { 0.0 };
        }
    };
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    project(&mut z);
    if norm(&r) / bnorm <= tol {
        project(x);
        return CgOutcome {
            iterations: 0,
            converged: true,
            history,
        };
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 1..=max_iters {
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq == 0.0 || !pq.is_finite() {
            break;
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        project(&mut r);
        let rel = norm(&r) / bnorm;
        history.push(rel);
        if rel <= tol {
            project(x);
            return CgOutcome {
                iterations: it,
                converged: true,
                history,
            };
        }
        precond(&r, &mut z);
        project(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    project(x);
    CgOutcome {
        iterations: history.len(),
        converged: false,
        history,
    }
}
