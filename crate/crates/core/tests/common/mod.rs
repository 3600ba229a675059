#![allow(dead_code)]

use std::f64::consts::PI;

use initlab_core::*;

/// Taylor–Green vortex on a periodic `[0, 2π)²` box with unit amplitude.
pub fn taylor_green(n: usize, nu: f64) -> (Grid, FreestreamConditions, FlowState) {
    let grid = Grid::periodic(GridSpec::new(n, n, 2.0 * PI, 2.0 * PI)).unwrap();
    let fs = FreestreamConditions::new(1.0, 1.0, nu, 0.0, 2.0 * PI).unwrap();
    let mut s = FlowState::zeros(&grid);
    for j in 0..n {
        for i in 0..=n {
            let (x, y) = grid.u_face(i, j);
            s.u.set(i, j, x.sin() * y.cos());
        }
    }
    for j in 0..=n {
        for i in 0..n {
            let (x, y) = grid.v_face(i, j);
            s.v.set(i, j, -x.cos() * y.sin());
        }
    }
    (grid, fs, s)
}

/// Relative L2 velocity error against the decayed analytic vortex.
pub fn taylor_green_error(grid: &Grid, s: &FlowState, nu: f64) -> f64 {
    let decay = (-2.0 * nu * s.t).exp();
    let (mut num, mut den) = (0.0, 0.0);
    let n = grid.nx();
    for j in 0..n {
        for i in 0..n {
            let (x, y) = grid.u_face(i, j);
            let ua = decay * x.sin() * y.cos();
            num += (s.u.get(i, j) - ua).powi(2);
            den += ua * ua;
            let (x, y) = grid.v_face(i, j);
            let va = -decay * x.cos() * y.sin();
            num += (s.v.get(i, j) - va).powi(2);
            den += va * va;
        }
    }
    (num / den).sqrt()
}

/// The default bluff-body case at a chosen resolution: an 8 × 4 channel
/// with a 0.5 m square at x = 2, Re = 150.
pub fn square_case(nx: usize, ny: usize) -> (Grid, ObstacleMask, FreestreamConditions) {
    let grid = make_grid(GridSpec::new(nx, ny, 8.0, 4.0)).unwrap();
    let mask = rasterize_obstacle(
        &grid,
        &ShapeSpec::Rectangle {
            cx: 2.0,
            cy: 2.03125,
            width: 0.5,
            height: 0.5,
        },
    )
    .unwrap();
    let fs = FreestreamConditions::new(38.889, 1.225, 38.889 * 0.5 / 150.0, 0.24, 0.5).unwrap();
    (grid, mask, fs)
}
