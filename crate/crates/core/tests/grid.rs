use initlab_core::*;
use proptest::prelude::*;

fn fs() -> FreestreamConditions {
    FreestreamConditions::new(38.889, 1.225, 0.13, 0.24, 0.5).unwrap()
}

fn shape() -> impl Strategy<Value = ShapeSpec> {
    prop_oneof![
        (1.5..5.0f64, 1.0..3.0f64, 0.2..1.5f64, 0.2..1.5f64).prop_map(|(cx, cy, width, height)| ShapeSpec::Rectangle {
            cx,
            cy,
            width,
            height
        }),
        (1.5..5.0f64, 1.0..3.0f64, 0.15..0.8f64).prop_map(|(cx, cy, radius)| ShapeSpec::Circle { cx, cy, radius }),
    ]
}

fn random_state(grid: &Grid, seed: u64) -> FlowState {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut s = FlowState::zeros(grid);
    for f in [&mut s.u, &mut s.v, &mut s.p, &mut s.k] {
        for x in f.as_mut_slice() {
            *x = rng.gen_range(-50.0..50.0);
        }
    }
    s
}

#[test]
fn grid_spacing_and_locations() {
    let g = make_grid(GridSpec::new(256, 128, 8.0, 4.0)).unwrap();
    assert_eq!((g.dx(), g.dy()), (0.03125, 0.03125));
    assert_eq!(g.u_dims(), (257, 128));
    assert_eq!(g.v_dims(), (256, 129));
    assert_eq!(g.cell_center(0, 0), (0.015625, 0.015625));
    assert_eq!(g.u_face(256, 0), (8.0, 0.015625));
    assert_eq!(g.v_face(0, 128), (0.015625, 4.0));
}

#[test]
fn invalid_grids_are_rejected() {
    assert!(make_grid(GridSpec::new(4, 64, 1.0, 1.0)).is_err());
    assert!(make_grid(GridSpec::new(64, 64, 0.0, 1.0)).is_err());
    assert!(make_grid(GridSpec::new(64, 64, 1.0, f64::NAN)).is_err());
    let mut big = GridSpec::new(4000, 2000, 1.0, 1.0);
    assert!(matches!(make_grid(big), Err(Error::InvalidGrid(_))));
    big.cell_cap = 10_000_000;
    assert!(make_grid(big).is_ok());
}

#[test]
fn obstacle_clearance_rules() {
    let g = make_grid(GridSpec::new(64, 32, 8.0, 4.0)).unwrap();
    let rect = |cx: f64, cy: f64, w: f64, h: f64| ShapeSpec::Rectangle {
        cx,
        cy,
        width: w,
        height: h,
    };
    assert!(matches!(rasterize_obstacle(&g, &rect(0.3, 2.0, 0.5, 0.5)), Err(Error::InvalidShape(_))));
    assert!(matches!(rasterize_obstacle(&g, &rect(2.0, 0.3, 0.5, 0.5)), Err(Error::InvalidShape(_))));
    assert!(matches!(rasterize_obstacle(&g, &rect(2.0, 2.0, 0.01, 0.01)), Err(Error::EmptyObstacle)));
    assert!(rasterize_obstacle(&g, &rect(9.0, 2.0, 0.5, 0.5)).is_err());
    assert!(rasterize_obstacle(&g, &rect(2.0, 2.0, -0.5, 0.5)).is_err());
    // Exactly two cells of clearance below.
    assert!(rasterize_obstacle(&g, &rect(2.0, 0.5, 0.5, 0.5)).is_ok());
}

#[test]
fn default_square_occupies_four_by_four_cells() {
    let g = make_grid(GridSpec::new(64, 32, 8.0, 4.0)).unwrap();
    let m = rasterize_obstacle(
        &g,
        &ShapeSpec::Rectangle {
            cx: 2.0,
            cy: 2.03125,
            width: 0.5,
            height: 0.5,
        },
    )
    .unwrap();
    assert_eq!(m.solid_count(), 16);
    assert_eq!(m.solid_bounds(), Some((14, 14, 17, 17)));
    assert_eq!(m.solid_extent(&g), Some((1.75, 1.75, 2.25, 2.25)));
    assert_eq!(m.boundary_cells().len(), 16);
}

#[test]
fn coarsening_by_majority() {
    let g = make_grid(GridSpec::new(64, 32, 8.0, 4.0)).unwrap();
    let c = make_grid(GridSpec::new(16, 8, 8.0, 4.0)).unwrap();
    let m = rasterize_obstacle(
        &g,
        &ShapeSpec::Rectangle {
            cx: 2.0,
            cy: 2.0,
            width: 1.0,
            height: 1.0,
        },
    )
    .unwrap();
    let cm = m.coarsen(&c, 4).unwrap();
    assert_eq!(cm.solid_bounds(), Some((3, 3, 4, 4)));
    assert!(m.coarsen(&c, 2).is_err());
}

#[test]
fn boundary_conditions_channel_values() {
    let g = make_grid(GridSpec::new(32, 16, 8.0, 4.0)).unwrap();
    let m = rasterize_obstacle(
        &g,
        &ShapeSpec::Circle {
            cx: 3.0,
            cy: 2.0,
            radius: 0.6,
        },
    )
    .unwrap();
    let f = fs();
    let mut s = random_state(&g, 3);
    let outlet: Vec<f64> = (0..16).map(|j| s.u.get(32, j)).collect();
    apply_boundary_conditions(&mut s, &g, &f, &m).unwrap();
    for j in 0..16 {
        assert_eq!(s.u.get(0, j), f.u_inf);
        assert_eq!(s.u.get(32, j), outlet[j]);
    }
    for i in 0..32 {
        assert_eq!((s.v.get(i, 0), s.v.get(i, 16)), (0.0, 0.0));
    }
    for j in 0..16 {
        for i in 0..32 {
            if m.is_solid(i, j) {
                assert_eq!((s.u.get(i, j), s.u.get(i + 1, j), s.v.get(i, j), s.v.get(i, j + 1)), (0.0, 0.0, 0.0, 0.0));
                assert_eq!((s.p.get(i, j), s.k.get(i, j)), (0.0, f.k_inf));
            }
        }
    }
    let mut wrong = FlowState::zeros(&make_grid(GridSpec::new(16, 16, 8.0, 4.0)).unwrap());
    assert!(matches!(apply_boundary_conditions(&mut wrong, &g, &f, &m), Err(Error::ShapeMismatch { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn boundary_conditions_are_idempotent(sh in shape(), seed in any::<u64>(), periodic in any::<bool>()) {
        let spec = GridSpec::new(48, 24, 6.0, 4.0);
        let g = if periodic { Grid::periodic(spec).unwrap() } else { make_grid(spec).unwrap() };
        let m = match rasterize_obstacle(&g, &sh) {
            Ok(m) => m,
            Err(_) => ObstacleMask::none(&g),
        };
        let mut s = random_state(&g, seed);
        apply_boundary_conditions(&mut s, &g, &fs(), &m).unwrap();
        let once = s.clone();
        apply_boundary_conditions(&mut s, &g, &fs(), &m).unwrap();
        prop_assert_eq!(once, s);
    }

    #[test]
    fn rasterization_is_deterministic_and_matches_centres(sh in shape(), nx in 16usize..80) {
        let g = make_grid(GridSpec::new(nx, nx / 2 + 8, 6.0, 4.0)).unwrap();
        let a = rasterize_obstacle(&g, &sh);
        let b = rasterize_obstacle(&g, &sh);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a, &b);
                for j in 0..g.ny() {
                    for i in 0..g.nx() {
                        let (x, y) = g.cell_center(i, j);
                        prop_assert_eq!(a.is_solid(i, j), sh.contains(x, y));
                    }
                }
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "non-deterministic rasterization"),
        }
    }

    #[test]
    fn mirrored_shape_gives_mirrored_mask(sh in shape()) {
        let g = make_grid(GridSpec::new(48, 32, 6.0, 4.0)).unwrap();
        // Mirror about the domain centreline; cell centres map onto cell centres.
        if let (Ok(a), Ok(b)) = (rasterize_obstacle(&g, &sh), rasterize_obstacle(&g, &sh.mirrored_y(2.0))) {
            for j in 0..32 {
                for i in 0..48 {
                    prop_assert_eq!(a.is_solid(i, j), b.is_solid(i, 31 - j));
                }
            }
        }
    }

    #[test]
    fn boundary_cells_are_fluid_with_solid_neighbour(sh in shape()) {
        let g = make_grid(GridSpec::new(60, 40, 6.0, 4.0)).unwrap();
        if let Ok(m) = rasterize_obstacle(&g, &sh) {
            let listed: std::collections::HashSet<_> = m.boundary_cells().iter().copied().collect();
            for j in 0..40usize {
                for i in 0..60usize {
                    let touches = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)]
                        .iter()
                        .any(|&(a, b)| a < 60 && b < 40 && m.is_solid(a, b));
                    prop_assert_eq!(listed.contains(&(i, j)), !m.is_solid(i, j) && touches);
                }
            }
        }
    }
}
