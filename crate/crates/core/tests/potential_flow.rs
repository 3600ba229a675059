use initlab_core::potential::max_divergence;
use initlab_core::*;

const U: f64 = 38.889;
const RHO: f64 = 1.225;

fn fs(u: f64) -> FreestreamConditions {
    FreestreamConditions::new(u, RHO, 0.1, 0.24, 1.0).unwrap()
}

/// 128² cells on an 8 m square with a cylinder of radius 0.5 m.
fn cylinder_case() -> (Grid, ObstacleMask, ShapeSpec) {
    let grid = make_grid(GridSpec::new(128, 128, 8.0, 8.0)).unwrap();
    let shape = ShapeSpec::Circle {
        cx: 3.0,
        cy: 4.0,
        radius: 0.5,
    };
    let mask = rasterize_obstacle(&grid, &shape).unwrap();
    (grid, mask, shape)
}

fn speed_at_centres(sol: &PotentialSolution, grid: &Grid, mask: &ObstacleMask) -> Vec<Option<f64>> {
    let (nx, ny) = (grid.nx(), grid.ny());
    (0..nx * ny)
        .map(|c| {
            let (i, j) = (c % nx, c / nx);
            (!mask.is_solid(i, j)).then(|| {
                let u = 0.5 * (sol.u.get(i, j) + sol.u.get(i + 1, j));
                let v = 0.5 * (sol.v.get(i, j) + sol.v.get(i, j + 1));
                (u * u + v * v).sqrt()
            })
        })
        .collect()
}

#[test]
fn cylinder_peak_speed_matches_analytic() {
    let (grid, mask, shape) = cylinder_case();
    let ShapeSpec::Circle { cx, cy, radius } = shape else { unreachable!() };
    let f = fs(U);
    let sol = solve_potential(&grid, &mask, &f, 1e-8, 100_000).unwrap();
    let speeds = speed_at_centres(&sol, &grid, &mask);
    let numeric = speeds.iter().flatten().fold(0.0_f64, |m, &s| m.max(s));
    // Unbounded potential flow past a cylinder, at the same cell centres.
    let mut analytic = 0.0_f64;
    for c in mask.boundary_cells() {
        let (x, y) = grid.cell_center(c.0, c.1);
        let (dx, dy) = (x - cx, y - cy);
        let r2 = dx * dx + dy * dy;
        let th = dy.atan2(dx);
        let a2 = radius * radius / r2;
        let ur = U * (1.0 - a2) * th.cos();
        let ut = -U * (1.0 + a2) * th.sin();
        analytic = analytic.max((ur * ur + ut * ut).sqrt());
    }
    assert!((analytic / U - 2.0).abs() < 0.3, "analytic peak {analytic}");
    let rel = (numeric - 2.0 * U).abs() / (2.0 * U);
    assert!(rel <= 0.15, "peak {numeric} vs 2U = {} ({rel:.3})", 2.0 * U);
    assert!((numeric - analytic).abs() / analytic <= 0.15);
}

#[test]
fn cylinder_stagnation_pressure() {
    let (grid, mask, _) = cylinder_case();
    let f = fs(U);
    let sol = solve_potential(&grid, &mask, &f, 1e-8, 100_000).unwrap();
    let (x0, ..) = mask.solid_extent(&grid).unwrap();
    // Frontmost fluid boundary cell on the row through the centre.
    let j = grid.ny() / 2;
    let i = (0..grid.nx()).find(|&i| mask.is_solid(i + 1, j) && !mask.is_solid(i, j)).unwrap();
    assert!(grid.cell_center(i, j).0 < x0);
    let q = 0.5 * RHO * U * U;
    let p = sol.p.get(i, j);
    assert!((p - q).abs() / q <= 0.10, "stagnation p {p} vs {q}");
}

#[test]
fn solution_invariants_hold() {
    let (grid, mask, _) = cylinder_case();
    let f = fs(U);
    let tol = 1e-8;
    let sol = solve_potential(&grid, &mask, &f, tol, 100_000).unwrap();
    assert!(sol.residual <= tol);
    let div = max_divergence(&grid, &mask, &sol.u, &sol.v);
    assert!(div <= 10.0 * tol * U / grid.dx(), "divergence {div}");
    let cap = potential::SPEED_CLAMP * U;
    assert!(sol.u.max_abs() <= cap && sol.v.max_abs() <= cap);
}

#[test]
fn mirrored_obstacle_mirrors_solution() {
    let grid = make_grid(GridSpec::new(64, 32, 8.0, 4.0)).unwrap();
    let shape = ShapeSpec::Rectangle {
        cx: 2.0,
        cy: 2.4,
        width: 0.5,
        height: 0.75,
    };
    let f = fs(U);
    let a_mask = rasterize_obstacle(&grid, &shape).unwrap();
    let b_mask = rasterize_obstacle(&grid, &shape.mirrored_y(2.0)).unwrap();
    let a = solve_potential(&grid, &a_mask, &f, 1e-12, 100_000).unwrap();
    let b = solve_potential(&grid, &b_mask, &f, 1e-12, 100_000).unwrap();
    let (nx, ny) = (grid.nx(), grid.ny());
    let scale_u = a.u.max_abs();
    let scale_p = a.p.max_abs();
    for j in 0..ny {
        for i in 0..=nx {
            assert!((a.u.get(i, j) - b.u.get(i, ny - 1 - j)).abs() <= 1e-10 * scale_u);
        }
        for i in 0..nx {
            assert!((a.p.get(i, j) - b.p.get(i, ny - 1 - j)).abs() <= 1e-10 * scale_p);
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            assert!((a.v.get(i, j) + b.v.get(i, ny - j)).abs() <= 1e-10 * scale_u);
        }
    }
}

#[test]
fn doubling_speed_scales_velocity_and_pressure() {
    let grid = make_grid(GridSpec::new(64, 32, 8.0, 4.0)).unwrap();
    let mask = rasterize_obstacle(
        &grid,
        &ShapeSpec::Circle {
            cx: 2.0,
            cy: 2.0,
            radius: 0.4,
        },
    )
    .unwrap();
    let a = solve_potential(&grid, &mask, &fs(U), 1e-12, 100_000).unwrap();
    let b = solve_potential(&grid, &mask, &fs(2.0 * U), 1e-12, 100_000).unwrap();
    let close = |x: f64, y: f64, s: f64| (x - y).abs() <= 1e-10 * s;
    let su = 2.0 * a.u.max_abs();
    for (x, y) in a.u.as_slice().iter().zip(b.u.as_slice()) {
        assert!(close(2.0 * x, *y, su));
    }
    for (x, y) in a.v.as_slice().iter().zip(b.v.as_slice()) {
        assert!(close(2.0 * x, *y, su));
    }
    let sp = 4.0 * a.p.max_abs();
    for (x, y) in a.p.as_slice().iter().zip(b.p.as_slice()) {
        assert!(close(4.0 * x, *y, sp));
    }
}

#[test]
fn total_pressure_is_nearly_uniform() {
    let (grid, mask, _) = cylinder_case();
    let f = fs(U);
    let state = init_potential(&grid, &mask, &f).unwrap();
    let p0 = total_pressure(&state, &f);
    let q = f.dynamic_pressure();
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            if !mask.is_solid(i, j) {
                let dev = (p0.get(i, j) - q).abs() / q;
                assert!(dev <= 0.05, "cell ({i}, {j}) deviates by {dev:.4}");
            }
        }
    }
}

#[test]
fn potential_k_is_freestream_value() {
    let grid = make_grid(GridSpec::new(16, 8, 2.0, 1.0)).unwrap();
    let k = potential_k_field(&grid, &fs(U));
    assert!(k.as_slice().iter().all(|&v| v == 0.24));
    let zero = FreestreamConditions::new(U, RHO, 0.1, 0.0, 1.0).unwrap();
    assert!(potential_k_field(&grid, &zero).as_slice().iter().all(|&v| v == 0.0));
    assert!(FreestreamConditions::new(U, RHO, 0.1, -0.1, 1.0).is_err());
}
