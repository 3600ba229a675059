use crate::error::{Error, Result};
use crate::field::Field2;
use crate::grid::{Boundary, FreestreamConditions, Grid, ObstacleMask};

/// Velocity, pressure and turbulence-indicator fields on the staggered grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub u: Field2,
    pub v: Field2,
    pub p: Field2,
    pub k: Field2,
    pub t: f64,
}

impl FlowState {
    pub fn zeros(grid: &Grid) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        Self {
            u: Field2::zeros(nx + 1, ny),
            v: Field2::zeros(nx, ny + 1),
            p: Field2::zeros(nx, ny),
            k: Field2::zeros(nx, ny),
            t: 0.0,
        }
    }

    pub fn check_shapes(&self, grid: &Grid) -> Result<()> {
        let expect = [
            ("u", self.u.dims(), grid.u_dims()),
            ("v", self.v.dims(), grid.v_dims()),
            ("p", self.p.dims(), grid.cell_dims()),
            ("k", self.k.dims(), grid.cell_dims()),
        ];
        for (field, got, expected) in expect {
            if got != expected {
                return Err(Error::ShapeMismatch { field, expected, got });
            }
        }
        Ok(())
    }

    /// Shapes, finiteness and `k ≥ 0`.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        self.check_shapes(grid)?;
        for (name, f) in [("u", &self.u), ("v", &self.v), ("p", &self.p), ("k", &self.k)] {
            if !f.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }
        if !self.t.is_finite() {
            return Err(Error::NonFinite("t"));
        }
        if self.k.min() < 0.0 {
            return Err(Error::InvalidSurrogate("negative k in flow state".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn u_center(&self, i: usize, j: usize) -> f64 {
        0.5 * (self.u.get(i, j) + self.u.get(i + 1, j))
    }

    #[inline]
    pub fn v_center(&self, i: usize, j: usize) -> f64 {
        0.5 * (self.v.get(i, j) + self.v.get(i, j + 1))
    }

    pub fn velocity_centers(&self) -> (Field2, Field2) {
        let (nx, ny) = self.p.dims();
        (
            Field2::from_fn(nx, ny, |i, j| self.u_center(i, j)),
            Field2::from_fn(nx, ny, |i, j| self.v_center(i, j)),
        )
    }

    /// Total kinetic energy ½Σ(u²+v²)·dA summed over faces.
    pub fn kinetic_energy(&self, grid: &Grid) -> f64 {
        let area = grid.dx() * grid.dy();
        let (unx, uny) = self.u.dims();
        let (vnx, vny) = self.v.dims();
        let periodic = grid.boundary() == Boundary::Periodic;
        let mut e = 0.0;
        for j in 0..uny {
            for i in 0..unx {
                if periodic && i == unx - 1 {
                    continue;
                }
                e += self.u.get(i, j).powi(2);
            }
        }
        for j in 0..vny {
            if periodic && j == vny - 1 {
                continue;
            }
            for i in 0..vnx {
                e += self.v.get(i, j).powi(2);
            }
        }
        0.5 * e * area
    }
}

/// Overwrites boundary and solid values; interior fluid values are left as is.
///
/// Channel domains get `u = U∞` on the inlet faces, `v = 0` on the slip walls,
/// zero velocity on every face touching a solid cell, and `p = 0, k = k∞`
/// inside solid cells. The outlet face is zero-gradient and owned by the
/// time stepper, so it is not touched here. Periodic domains only get their
/// duplicated seam faces synchronised.
pub fn apply_boundary_conditions(
    state: &mut FlowState,
    grid: &Grid,
    fs: &FreestreamConditions,
    mask: &ObstacleMask,
) -> Result<()> {
    state.check_shapes(grid)?;
    if mask.dims() != grid.cell_dims() {
        return Err(Error::ShapeMismatch {
            field: "mask",
            expected: grid.cell_dims(),
            got: mask.dims(),
        });
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    match grid.boundary() {
        Boundary::Periodic => {
            for j in 0..ny {
                let w = state.u.get(0, j);
                state.u.set(nx, j, w);
            }
            for i in 0..nx {
                let s = state.v.get(i, 0);
                state.v.set(i, ny, s);
            }
        }
        Boundary::Channel => {
            for j in 0..ny {
                state.u.set(0, j, fs.u_inf);
            }
            for i in 0..nx {
                state.v.set(i, 0, 0.0);
                state.v.set(i, ny, 0.0);
            }
        }
    }
    if mask.is_empty() {
        return Ok(());
    }
    for (c, _) in mask.solid().iter().enumerate().filter(|(_, &s)| s) {
        let (i, j) = (c % nx, c / nx);
        state.u.set(i, j, 0.0);
        state.u.set(i + 1, j, 0.0);
        state.v.set(i, j, 0.0);
        state.v.set(i, j + 1, 0.0);
        state.p.set(i, j, 0.0);
        state.k.set(i, j, fs.k_inf);
    }
    Ok(())
}
