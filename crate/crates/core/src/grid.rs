//! Uniform staggered (MAC) grid, obstacle rasterization and freestream data.
//!
//! Storage layout for an `nx × ny` grid:
//! - `u` on x-faces, `(nx+1) × ny`, located at `(i·dx, (j+½)·dy)`
//! - `v` on y-faces, `nx × (ny+1)`, located at `((i+½)·dx, j·dy)`
//! - `p`, `k` at cell centres, `nx × ny`, located at `((i+½)·dx, (j+½)·dy)`

use crate::error::{Error, Result};

pub const DEFAULT_CELL_CAP: usize = 4_000_000;
const MIN_CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub cell_cap: usize,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        Self {
            nx,
            ny,
            lx,
            ly,
            cell_cap: DEFAULT_CELL_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < MIN_CELLS || self.ny < MIN_CELLS {
            return Err(Error::InvalidGrid(format!(
                "cell counts must be at least {MIN_CELLS} (got nx={}, ny={})",
                self.nx, self.ny
            )));
        }
        if !(self.lx > 0.0 && self.lx.is_finite() && self.ly > 0.0 && self.ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "domain lengths must be positive (got lx={}, ly={})",
                self.lx, self.ly
            )));
        }
        let cells = self.nx.checked_mul(self.ny).unwrap_or(usize::MAX);
        if cells > self.cell_cap {
            return Err(Error::InvalidGrid(format!(
                "{cells} cells exceeds the cap of {}",
                self.cell_cap
            )));
        }
        Ok(())
    }
}

/// Boundary treatment of the outer domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Velocity inlet on the left, zero-gradient outlet with `p = 0` on the
    /// right, slip walls top and bottom.
    Channel,
    /// Doubly periodic box. Used for verification runs only.
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    dx: f64,
    dy: f64,
    boundary: Boundary,
}

pub fn make_grid(spec: GridSpec) -> Result<Grid> {
    Grid::new(spec)
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        Self::with_boundary(spec, Boundary::Channel)
    }

    pub fn periodic(spec: GridSpec) -> Result<Self> {
        Self::with_boundary(spec, Boundary::Periodic)
    }

    pub fn with_boundary(spec: GridSpec, boundary: Boundary) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            dx: spec.lx / spec.nx as f64,
            dy: spec.ly / spec.ny as f64,
            spec,
            boundary,
        })
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.spec.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.spec.ny
    }

    #[inline]
    pub fn lx(&self) -> f64 {
        self.spec.lx
    }

    #[inline]
    pub fn ly(&self) -> f64 {
        self.spec.ly
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.dx
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn cell_count(&self) -> usize {
        self.spec.nx * self.spec.ny
    }

    #[inline]
    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy)
    }

    #[inline]
    pub fn u_face(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.dx, (j as f64 + 0.5) * self.dy)
    }

    #[inline]
    pub fn v_face(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, j as f64 * self.dy)
    }

    pub fn u_dims(&self) -> (usize, usize) {
        (self.spec.nx + 1, self.spec.ny)
    }

    pub fn v_dims(&self) -> (usize, usize) {
        (self.spec.nx, self.spec.ny + 1)
    }

    pub fn cell_dims(&self) -> (usize, usize) {
        (self.spec.nx, self.spec.ny)
    }

    pub fn diagonal(&self) -> f64 {
        self.spec.lx.hypot(self.spec.ly)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeSpec {
    Rectangle {
        cx: f64,
        cy: f64,
        width: f64,
        height: f64,
    },
    Circle {
        cx: f64,
        cy: f64,
        radius: f64,
    },
}

impl ShapeSpec {
    pub fn extents(&self) -> (f64, f64, f64, f64) {
        match *self {
            ShapeSpec::Rectangle {
                cx,
                cy,
                width,
                height,
            } => (
                cx - 0.5 * width,
                cy - 0.5 * height,
                cx + 0.5 * width,
                cy + 0.5 * height,
            ),
            ShapeSpec::Circle { cx, cy, radius } => (cx - radius, cy - radius, cx + radius, cy + radius),
        }
    }

    /// Strict interior test used for rasterization.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            ShapeSpec::Rectangle { .. } => {
                let (x0, y0, x1, y1) = self.extents();
                x > x0 && x < x1 && y > y0 && y < y1
            }
            ShapeSpec::Circle { cx, cy, radius } => {
                let (ddx, ddy) = (x - cx, y - cy);
                ddx * ddx + ddy * ddy < radius * radius
            }
        }
    }

    /// Reflection about the horizontal line `y = y_axis`.
    pub fn mirrored_y(&self, y_axis: f64) -> Self {
        match *self {
            ShapeSpec::Rectangle {
                cx,
                cy,
                width,
                height,
            } => ShapeSpec::Rectangle {
                cx,
                cy: 2.0 * y_axis - cy,
                width,
                height,
            },
            ShapeSpec::Circle { cx, cy, radius } => ShapeSpec::Circle {
                cx,
                cy: 2.0 * y_axis - cy,
                radius,
            },
        }
    }
}

/// Solid/fluid classification of pressure cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleMask {
    nx: usize,
    ny: usize,
    solid: Vec<bool>,
    boundary_cells: Vec<(usize, usize)>,
}

impl ObstacleMask {
    /// A mask with no solid cells.
    pub fn none(grid: &Grid) -> Self {
        Self {
            nx: grid.nx(),
            ny: grid.ny(),
            solid: vec![false; grid.cell_count()],
            boundary_cells: Vec::new(),
        }
    }

    /// Builds a mask from a per-cell solid flag (row-major, x fastest).
    pub fn from_solid(grid: &Grid, solid: Vec<bool>) -> Result<Self> {
        let (nx, ny) = (grid.nx(), grid.ny());
        if solid.len() != nx * ny {
            return Err(Error::ShapeMismatch {
                field: "solid",
                expected: (nx, ny),
                got: (solid.len(), 1),
            });
        }
        if grid.boundary() == Boundary::Channel && (0..ny).any(|j| solid[j * nx]) {
            return Err(Error::InvalidShape("obstacle touches the inlet".into()));
        }
        let mut boundary_cells = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if solid[j * nx + i] {
                    continue;
                }
                let touches = (i > 0 && solid[j * nx + i - 1])
                    || (i + 1 < nx && solid[j * nx + i + 1])
                    || (j > 0 && solid[(j - 1) * nx + i])
                    || (j + 1 < ny && solid[(j + 1) * nx + i]);
                if touches {
                    boundary_cells.push((i, j));
                }
            }
        }
        Ok(Self {
            nx,
            ny,
            solid,
            boundary_cells,
        })
    }

    #[inline]
    pub fn is_solid(&self, i: usize, j: usize) -> bool {
        self.solid[j * self.nx + i]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn solid(&self) -> &[bool] {
        &self.solid
    }

    pub fn solid_count(&self) -> usize {
        self.solid.iter().filter(|&&s| s).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.solid.iter().any(|&s| s)
    }

    /// Fluid cells with at least one solid 4-neighbour, in row-major order.
    pub fn boundary_cells(&self) -> &[(usize, usize)] {
        &self.boundary_cells
    }

    /// Index bounds `(i0, j0, i1, j1)` (inclusive) of the solid cells.
    pub fn solid_bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut out: Option<(usize, usize, usize, usize)> = None;
        for j in 0..self.ny {
            for i in 0..self.nx {
                if self.is_solid(i, j) {
                    out = Some(match out {
                        None => (i, j, i, j),
                        Some((a, b, c, d)) => (a.min(i), b.min(j), c.max(i), d.max(j)),
                    });
                }
            }
        }
        out
    }

    /// Physical bounding box `(xmin, ymin, xmax, ymax)` of the solid region.
    pub fn solid_extent(&self, grid: &Grid) -> Option<(f64, f64, f64, f64)> {
        self.solid_bounds().map(|(i0, j0, i1, j1)| {
            (
                i0 as f64 * grid.dx(),
                j0 as f64 * grid.dy(),
                (i1 + 1) as f64 * grid.dx(),
                (j1 + 1) as f64 * grid.dy(),
            )
        })
    }

    /// An x-face is open when both neighbouring cells exist and are fluid.
    #[inline]
    pub fn u_face_open(&self, i: usize, j: usize) -> bool {
        i > 0 && i < self.nx && !self.is_solid(i - 1, j) && !self.is_solid(i, j)
    }

    /// True when the x-face touches at least one solid cell.
    #[inline]
    pub fn u_face_walled(&self, i: usize, j: usize) -> bool {
        (i > 0 && self.is_solid(i - 1, j)) || (i < self.nx && self.is_solid(i, j))
    }

    #[inline]
    pub fn v_face_open(&self, i: usize, j: usize) -> bool {
        j > 0 && j < self.ny && !self.is_solid(i, j - 1) && !self.is_solid(i, j)
    }

    #[inline]
    pub fn v_face_walled(&self, i: usize, j: usize) -> bool {
        (j > 0 && self.is_solid(i, j - 1)) || (j < self.ny && self.is_solid(i, j))
    }

    /// Coarsens the mask by an integer factor; a coarse cell is solid when
    /// at least half of its children are.
    pub fn coarsen(&self, coarse: &Grid, factor: usize) -> Result<Self> {
        let (cnx, cny) = (coarse.nx(), coarse.ny());
        if cnx * factor != self.nx || cny * factor != self.ny {
            return Err(Error::InvalidGrid(format!(
                "{}x{} is not a {factor}x coarsening of {}x{}",
                cnx, cny, self.nx, self.ny
            )));
        }
        let half = factor * factor;
        let mut solid = vec![false; cnx * cny];
        for cj in 0..cny {
            for ci in 0..cnx {
                let mut count = 0;
                for dj in 0..factor {
                    for di in 0..factor {
                        if self.is_solid(ci * factor + di, cj * factor + dj) {
                            count += 1;
                        }
                    }
                }
                solid[cj * cnx + ci] = 2 * count >= half;
            }
        }
        Self::from_solid(coarse, solid)
    }
}

/// Rasterizes `shape` onto `grid`: a cell is solid iff its centre lies
/// strictly inside the shape.
pub fn rasterize_obstacle(grid: &Grid, shape: &ShapeSpec) -> Result<ObstacleMask> {
    let (x0, y0, x1, y1) = shape.extents();
    if !(x0.is_finite() && y0.is_finite() && x1.is_finite() && y1.is_finite()) || x1 <= x0 || y1 <= y0 {
        return Err(Error::InvalidShape(format!("degenerate shape {shape:?}")));
    }
    if x0 < 0.0 || y0 < 0.0 || x1 > grid.lx() || y1 > grid.ly() {
        return Err(Error::InvalidShape(format!(
            "shape extents ({x0}, {y0})-({x1}, {y1}) fall outside the domain"
        )));
    }
    let solid: Vec<bool> = (0..grid.ny())
        .flat_map(|j| (0..grid.nx()).map(move |i| (i, j)))
        .map(|(i, j)| {
            let (x, y) = grid.cell_center(i, j);
            shape.contains(x, y)
        })
        .collect();
    if !solid.iter().any(|&s| s) {
        return Err(Error::EmptyObstacle);
    }
    let (nx, ny) = (grid.nx(), grid.ny());
    let solid_at = |i: usize, j: usize| solid[j * nx + i];
    if (0..ny).any(|j| solid_at(0, j) || solid_at(1, j)) {
        return Err(Error::InvalidShape("obstacle touches the inlet".into()));
    }
    let crowded = (0..ny).any(|j| solid_at(nx - 1, j) || solid_at(nx - 2, j))
        || (0..nx).any(|i| solid_at(i, 0) || solid_at(i, 1) || solid_at(i, ny - 1) || solid_at(i, ny - 2));
    if crowded {
        return Err(Error::InvalidShape(
            "obstacle needs at least two cells of clearance to every boundary".into(),
        ));
    }
    ObstacleMask::from_solid(grid, solid)
}

/// Inflow state and reference scales.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreestreamConditions {
    pub u_inf: f64,
    pub rho: f64,
    pub nu: f64,
    pub k_inf: f64,
    pub l0: f64,
}

impl FreestreamConditions {
    pub fn new(u_inf: f64, rho: f64, nu: f64, k_inf: f64, l0: f64) -> Result<Self> {
        let fs = Self {
            u_inf,
            rho,
            nu,
            k_inf,
            l0,
        };
        fs.validate()?;
        Ok(fs)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("u_inf", self.u_inf), ("rho", self.rho), ("nu", self.nu), ("l0", self.l0)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidFreestream(format!("{name} must be positive (got {v})")));
            }
        }
        if !(self.k_inf >= 0.0 && self.k_inf.is_finite()) {
            return Err(Error::InvalidFreestream(format!(
                "k_inf must be non-negative (got {})",
                self.k_inf
            )));
        }
        Ok(())
    }

    /// Freestream dynamic pressure ½ρU∞².
    pub fn dynamic_pressure(&self) -> f64 {
        0.5 * self.rho * self.u_inf * self.u_inf
    }

    pub fn mu(&self) -> f64 {
        self.rho * self.nu
    }

    pub fn reynolds(&self, length: f64) -> f64 {
        self.u_inf * length / self.nu
    }
}
