//! Inviscid, irrotational reference flow around the obstacle.
//!
//! Solves `∇²φ = 0` on the fluid cells with `∂φ/∂x = U∞` on the inlet and
//! outlet and zero normal gradient on slip walls and solid faces. Face
//! velocities are the central differences of `φ`; pressure follows from
//! Bernoulli with `p∞ = 0`.

use crate::error::{Error, Result};
use crate::field::{Field2, ScalarField};
use crate::grid::{Boundary, FreestreamConditions, Grid, ObstacleMask};
use crate::poisson::conjugate_gradient;

/// Speeds above this multiple of `U∞` are clamped before use as initial data.
pub const SPEED_CLAMP: f64 = 4.0;

#[derive(Debug, Clone)]
pub struct PotentialSolution {
    pub phi: Field2,
    pub u: Field2,
    pub v: Field2,
    pub p: Field2,
    /// Final relative max-norm residual of the Laplace solve.
    pub residual: f64,
    pub iterations: usize,
}

fn neumann_laplacian(grid: &Grid, mask: &ObstacleMask, phi: &[f64], out: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ax, ay) = (1.0 / (grid.dx() * grid.dx()), 1.0 / (grid.dy() * grid.dy()));
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            if mask.is_solid(i, j) {
                out[c] = 0.0;
                continue;
            }
            let pc = phi[c];
            let mut acc = 0.0;
            if i > 0 && !mask.is_solid(i - 1, j) {
                acc += ax * (phi[c - 1] - pc);
            }
            if i + 1 < nx && !mask.is_solid(i + 1, j) {
                acc += ax * (phi[c + 1] - pc);
            }
            if j > 0 && !mask.is_solid(i, j - 1) {
                acc += ay * (phi[c - nx] - pc);
            }
            if j + 1 < ny && !mask.is_solid(i, j + 1) {
                acc += ay * (phi[c + nx] - pc);
            }
            out[c] = acc;
        }
    }
}

fn neumann_diagonal(grid: &Grid, mask: &ObstacleMask) -> Vec<f64> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ax, ay) = (1.0 / (grid.dx() * grid.dx()), 1.0 / (grid.dy() * grid.dy()));
    let mut d = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            if mask.is_solid(i, j) {
                continue;
            }
            let mut s = 0.0;
            if i > 0 && !mask.is_solid(i - 1, j) {
                s -= ax;
            }
            if i + 1 < nx && !mask.is_solid(i + 1, j) {
                s -= ax;
            }
            if j > 0 && !mask.is_solid(i, j - 1) {
                s -= ay;
            }
            if j + 1 < ny && !mask.is_solid(i, j + 1) {
                s -= ay;
            }
            d[j * nx + i] = s;
        }
    }
    d
}

/// Solves for the potential flow around `mask` with tolerance `tol` on the
/// relative max-norm residual.
pub fn solve_potential(
    grid: &Grid,
    mask: &ObstacleMask,
    fs: &FreestreamConditions,
    tol: f64,
    max_iters: usize,
) -> Result<PotentialSolution> {
    if grid.boundary() != Boundary::Channel {
        return Err(Error::InvalidGrid("potential flow needs a channel domain".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidSolverConfig(format!("tolerance must be positive (got {tol})")));
    }
    fs.validate()?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let (dx, dy) = (grid.dx(), grid.dy());
    let n = nx * ny;
    let active: Vec<bool> = mask.solid().iter().map(|s| !s).collect();

    let mut b = vec![0.0; n];
    for j in 0..ny {
        b[j * nx] += fs.u_inf / dx;
        if !mask.is_solid(nx - 1, j) {
            b[j * nx + nx - 1] -= fs.u_inf / dx;
        }
    }
    // Uniform-flow potential as the starting guess; exact without an obstacle.
    let mut phi: Vec<f64> = (0..n)
        .map(|c| if active[c] { fs.u_inf * grid.cell_center(c % nx, c / nx).0 } else { 0.0 })
        .collect();
    let diag = neumann_diagonal(grid, mask);
    let outcome = conjugate_gradient(
        |x, out| neumann_laplacian(grid, mask, x, out),
        &diag,
        &active,
        &b,
        &mut phi,
        tol,
        max_iters,
        true,
    );
    if !outcome.converged {
        return Err(Error::PotentialNotConverged {
            iterations: outcome.iterations,
            residuals: outcome.history,
        });
    }
    let residual = outcome.history.last().copied().unwrap_or(0.0);
    let phi = Field2::from_vec(nx, ny, phi);

    let cap = SPEED_CLAMP * fs.u_inf;
    let mut u = Field2::zeros(nx + 1, ny);
    for j in 0..ny {
        for i in 0..=nx {
            let val = if mask.u_face_walled(i, j) {
                0.0
            } else if i == 0 || i == nx {
                fs.u_inf
            } else {
                (phi.get(i, j) - phi.get(i - 1, j)) / dx
            };
            u.set(i, j, val.clamp(-cap, cap));
        }
    }
    let mut v = Field2::zeros(nx, ny + 1);
    for j in 1..ny {
        for i in 0..nx {
            if mask.v_face_open(i, j) {
                let val = (phi.get(i, j) - phi.get(i, j - 1)) / dy;
                v.set(i, j, val.clamp(-cap, cap));
            }
        }
    }
    let mut p = Field2::zeros(nx, ny);
    for j in 0..ny {
        for i in 0..nx {
            if mask.is_solid(i, j) {
                continue;
            }
            let uc = 0.5 * (u.get(i, j) + u.get(i + 1, j));
            let vc = 0.5 * (v.get(i, j) + v.get(i, j + 1));
            let speed2 = (uc * uc + vc * vc).min(cap * cap);
            p.set(i, j, 0.5 * fs.rho * (fs.u_inf * fs.u_inf - speed2));
        }
    }
    Ok(PotentialSolution {
        phi,
        u,
        v,
        p,
        residual,
        iterations: outcome.iterations,
    })
}

/// Turbulence indicator paired with the potential solution: `k ≡ k∞`.
pub fn potential_k_field(grid: &Grid, fs: &FreestreamConditions) -> ScalarField {
    Field2::new(grid.nx(), grid.ny(), fs.k_inf)
}

/// Max-norm discrete divergence over fluid cells.
pub fn max_divergence(grid: &Grid, mask: &ObstacleMask, u: &Field2, v: &Field2) -> f64 {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut m = 0.0_f64;
    for j in 0..ny {
        for i in 0..nx {
            if mask.is_solid(i, j) {
                continue;
            }
            let d = (u.get(i + 1, j) - u.get(i, j)) / grid.dx() + (v.get(i, j + 1) - v.get(i, j)) / grid.dy();
            m = m.max(d.abs());
        }
    }
    m
}
