use criterion::{black_box, criterion_group, criterion_main, Criterion};
use initlab_core::convergence::{convergence_time, running_median};
use initlab_core::init::{extend_surrogate_idw, ExtensionParams};
use initlab_core::poisson::PressureSolver;
use initlab_core::surrogate::{BBox, SurrogateField};
use initlab_core::*;

fn case() -> (Grid, ObstacleMask, FreestreamConditions) {
    let grid = make_grid(GridSpec::new(256, 128, 8.0, 4.0)).unwrap();
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

fn poisson(c: &mut Criterion) {
    let (grid, mask, _) = case();
    let mut solver = PressureSolver::new(&grid, &mask).unwrap();
    let n = grid.cell_count();
    let rhs: Vec<f64> = (0..n)
        .map(|k| if mask.solid()[k] { 0.0 } else { ((k * 7919) % 101) as f64 - 50.0 })
        .collect();
    let mut phi = vec![0.0; n];
    c.bench_function("poisson_solve_256x128_obstacle", |b| {
        b.iter(|| solver.solve(black_box(&rhs), &mut phi).unwrap())
    });
}

fn step(c: &mut Criterion) {
    let (grid, mask, fs) = case();
    let cfg = SolverConfig::new(1.8e-4, 1.0);
    let mut solver = TransientSolver::new(&grid, &mask, &fs, &cfg).unwrap();
    let mut state = init_potential(&grid, &mask, &fs).unwrap();
    c.bench_function("transient_step_256x128", |b| b.iter(|| solver.step(&mut state).unwrap()));
}

fn idw(c: &mut Criterion) {
    let (grid, mask, fs) = case();
    let mut s = SurrogateField {
        bbox: BBox {
            xmin: 1.0,
            ymin: 1.0,
            xmax: 4.25,
            ymax: 3.0,
        },
        points: Vec::new(),
        u: Vec::new(),
        v: Vec::new(),
        p: Vec::new(),
        k: Vec::new(),
    };
    for j in 0..16 {
        for i in 0..26 {
            let (x, y) = (1.0625 + 0.125 * i as f64, 1.0625 + 0.125 * j as f64);
            s.points.push((x, y));
            s.u.push(fs.u_inf * (1.0 - (-(y - 2.0) * (y - 2.0)).exp()));
            s.v.push(0.0);
            s.p.push(0.0);
            s.k.push(fs.k_inf);
        }
    }
    let params = ExtensionParams::for_grid(&grid);
    c.bench_function("extend_surrogate_idw_256x128", |b| {
        b.iter(|| extend_surrogate_idw(black_box(&s), &grid, &mask, &fs, &params).unwrap())
    });
}

fn median(c: &mut Criterion) {
    let n = 11_112;
    let times: Vec<f64> = (1..=n).map(|i| i as f64 * 1.8e-4).collect();
    let raw: Vec<f64> = times.iter().map(|t| 820.0 + 8.0 * (40.0 * t).sin() + 100.0 * (-5.0 * t).exp()).collect();
    c.bench_function("running_median_11k", |b| {
        b.iter(|| {
            let f = running_median(black_box(&times), black_box(&raw)).unwrap();
            convergence_time(&f, 0.01).unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = poisson, step, idw, median
}
criterion_main!(benches);
