//! The strategy-comparison experiment: one transient run per initialization
//! strategy on a shared case, each scored by its drag convergence time.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, PriorSource, PriorState};
use crate::convergence::{analyze_drag, to_ctu, write_series_csv};
use crate::error::{Error, Result};
use crate::grid::{rasterize_obstacle, FreestreamConditions, Grid, ObstacleMask};
use crate::init::{build_initial_state, init_uniform, InitStrategy};
use crate::snapshot::write_snapshot;
use crate::solver::{total_pressure, RunOptions, SolverConfig, TransientSolver};
use crate::state::FlowState;
use crate::surrogate::{save_surrogate, SurrogateField};

/// Scored run of one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub t_conv: f64,
    pub t_conv_ctu: f64,
    pub final_filtered: f64,
    pub samples: usize,
    /// Relative deviation of the initial state's mean upstream total
    /// pressure from `½ρU∞²`.
    pub init_p0_upstream_dev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRow {
    pub strategy: String,
    pub outcome: std::result::Result<RunSummary, String>,
    /// Seconds spent building the initial state, including any surrogate
    /// or precursor run it depends on.
    pub init_wall: f64,
    pub solver_wall: f64,
    /// Solver seconds up to `t_conv`, pro rata over the fixed-step run.
    pub solver_wall_to_conv: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonTable {
    pub rows: Vec<StrategyRow>,
}

pub const TABLE_CSV: &str = "table.csv";
pub const TABLE_TXT: &str = "table.txt";
pub const TIMINGS_CSV: &str = "timings.csv";
pub const SERIES_CSV: &str = "series.csv";

impl ComparisonTable {
    pub fn row(&self, strategy: &str) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }

    pub fn summary(&self, strategy: &str) -> Option<&RunSummary> {
        self.row(strategy).and_then(|r| r.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }

    /// Hardware-independent columns only, so reruns compare byte for byte.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "strategy",
            "status",
            "t_conv_s",
            "t_conv_ctu",
            "final_filtered_fx",
            "samples",
            "init_p0_upstream_dev",
            "error",
        ])?;
        for r in &self.rows {
            match &r.outcome {
                Ok(s) => w.write_record([
                    r.strategy.clone(),
                    "ok".into(),
                    s.t_conv.to_string(),
                    s.t_conv_ctu.to_string(),
                    s.final_filtered.to_string(),
                    s.samples.to_string(),
                    s.init_p0_upstream_dev.to_string(),
                    String::new(),
                ])?,
                Err(e) => w.write_record([
                    r.strategy.as_str(),
                    "failed",
                    "",
                    "",
                    "",
                    "",
                    "",
                    e.as_str(),
                ])?,
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::io("table", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn timings_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["strategy", "init_wall_s", "solver_wall_s", "solver_wall_to_conv_s"])?;
        for r in &self.rows {
            w.write_record([
                r.strategy.clone(),
                format!("{:.3}", r.init_wall),
                format!("{:.3}", r.solver_wall),
                format!("{:.3}", r.solver_wall_to_conv),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("timings", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Aligned text table with wall-clock columns.
    pub fn to_text(&self) -> String {
        let header = [
            "strategy",
            "init wall [s]",
            "t_conv [s]",
            "t_conv [CTU]",
            "solver wall to t_conv [s]",
            "final filtered fx [N/m]",
        ];
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            let mut line = vec![r.strategy.clone(), format!("{:.2}", r.init_wall)];
            match &r.outcome {
                Ok(s) => line.extend([
                    format!("{:.4}", s.t_conv),
                    format!("{:.2}", s.t_conv_ctu),
                    format!("{:.2}", r.solver_wall_to_conv),
                    format!("{:.3}", s.final_filtered),
                ]),
                Err(e) => line.extend(["failed".to_string(), String::new(), String::new(), e.clone()]),
            }
            rows.push(line);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (n, r) in rows.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
            if n == 0 {
                let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let put = |name: &str, text: String| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        put(TABLE_CSV, self.to_csv()?)?;
        put(TIMINGS_CSV, self.timings_csv()?)?;
        put(TABLE_TXT, self.to_text())
    }
}

/// Mean total pressure over fluid cells more than 1.5 obstacle lengths
/// upstream of the obstacle, relative to `½ρU∞²`, minus one.
pub fn upstream_total_pressure_deviation(
    state: &FlowState,
    grid: &Grid,
    mask: &ObstacleMask,
    fs: &FreestreamConditions,
) -> Option<f64> {
    let (x0, y0, x1, y1) = mask.solid_extent(grid)?;
    let x_cut = x0 - 1.5 * (x1 - x0).max(y1 - y0);
    let p0 = total_pressure(state, fs);
    let (mut sum, mut n) = (0.0, 0usize);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            if !mask.is_solid(i, j) && grid.cell_center(i, j).0 < x_cut {
                sum += p0.get(i, j);
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64 / fs.dynamic_pressure() - 1.0)
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Runs the case from uniform flow and writes the chosen state to `path`.
pub fn run_precursor(
    grid: &Grid,
    mask: &ObstacleMask,
    fs: &FreestreamConditions,
    solver: &SolverConfig,
    t_end: f64,
    dt: f64,
    state: PriorState,
    path: &Path,
) -> Result<()> {
    let cfg = SolverConfig {
        dt,
        t_end,
        sample_every: usize::MAX,
        ..*solver
    };
    let s0 = init_uniform(grid, mask, fs)?;
    let mut run = TransientSolver::new(grid, mask, fs, &cfg)?;
    let out = run.run(
        &s0,
        &RunOptions {
            snapshot_times: Vec::new(),
            average_from: (state == PriorState::Average).then_some(0.5 * t_end),
        },
    )?;
    let keep = match state {
        PriorState::Final => out.final_state,
        PriorState::Average => out.average.unwrap_or(out.final_state),
    };
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    write_snapshot(path, &keep, grid, fs)
}

struct Case {
    grid: Grid,
    mask: ObstacleMask,
}

fn run_strategy(
    cfg: &ExperimentConfig,
    case: &Case,
    strategy: &InitStrategy,
    surrogate: Option<&std::result::Result<(SurrogateField, f64), String>>,
    prior_wall: f64,
) -> StrategyRow {
    let name = strategy.name().to_string();
    let mut row = StrategyRow {
        strategy: name.clone(),
        outcome: Err(String::new()),
        init_wall: 0.0,
        solver_wall: 0.0,
        solver_wall_to_conv: 0.0,
    };
    let res = (|| -> Result<RunSummary> {
        let dir = cfg.output_dir.join(&name);
        create_dir(&dir)?;
        let fs = &cfg.freestream;
        let (grid, mask) = (&case.grid, &case.mask);
        let sur = match surrogate {
            Some(Ok((s, wall))) => {
                row.init_wall += wall;
                Some(s)
            }
            Some(Err(e)) => return Err(Error::InvalidSurrogate(e.clone())),
            None => None,
        };
        if matches!(strategy, InitStrategy::PriorSolution { .. }) {
            row.init_wall += prior_wall;
        }
        let start = Instant::now();
        let s0 = build_initial_state(strategy, grid, mask, fs, &cfg.extension, sur)?;
        row.init_wall += start.elapsed().as_secs_f64();
        let p0_dev = upstream_total_pressure_deviation(&s0, grid, mask, fs).unwrap_or(0.0);
        write_snapshot(&dir.join("initial.vtk"), &s0, grid, fs)?;

        let start = Instant::now();
        let mut solver = TransientSolver::new(grid, mask, fs, &cfg.solver)?;
        let out = solver.run(
            &s0,
            &RunOptions {
                snapshot_times: cfg.snapshot_times.clone(),
                average_from: None,
            },
        )?;
        row.solver_wall = start.elapsed().as_secs_f64();

        let (filtered, report) = analyze_drag(&out.series, cfg.tol)?;
        write_series_csv(&dir.join(SERIES_CSV), &out.series, Some(&filtered.filtered))?;
        for (n, snap) in out.snapshots.iter().enumerate() {
            write_snapshot(&dir.join(format!("snapshot_{n:03}.vtk")), snap, grid, fs)?;
        }
        write_snapshot(&dir.join("final.vtk"), &out.final_state, grid, fs)?;
        let span = cfg.solver.t_end - s0.t;
        row.solver_wall_to_conv = row.solver_wall * ((report.t_conv - s0.t) / span).clamp(0.0, 1.0);
        Ok(RunSummary {
            t_conv: report.t_conv,
            t_conv_ctu: to_ctu(report.t_conv, fs),
            final_filtered: report.final_value,
            samples: out.series.len(),
            init_p0_upstream_dev: p0_dev,
        })
    })();
    match &res {
        Ok(s) => info!("{name}: t_conv = {:.4} s ({:.2} CTU)", s.t_conv, s.t_conv_ctu),
        Err(e) => warn!("{name} failed: {e}"),
    }
    row.outcome = res.map_err(|e| e.to_string());
    row
}

/// Runs every configured strategy and writes the table. Strategy failures
/// become failed rows; case setup and output errors are returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ComparisonTable> {
    create_dir(&cfg.output_dir)?;
    let grid = Grid::new(cfg.grid)?;
    let mask = rasterize_obstacle(&grid, &cfg.shape)?;
    let fs = cfg.freestream;
    let case = Case { grid, mask };

    let needs_surrogate = cfg.strategies.iter().any(|s| s.surrogate_source().is_some());
    let surrogate = needs_surrogate.then(|| {
        let start = Instant::now();
        let built = cfg.surrogate.load(&case.grid, &case.mask, &fs).and_then(|s| {
            save_surrogate(&cfg.output_dir.join("surrogate.txt"), &s)?;
            Ok(s)
        });
        built.map(|s| (s, start.elapsed().as_secs_f64())).map_err(|e| e.to_string())
    });

    let mut prior_wall = 0.0;
    let mut prior_error = None;
    if cfg.strategies.iter().any(|s| matches!(s, InitStrategy::PriorSolution { .. })) {
        if let PriorSource::Precursor { t_end, dt, state } = cfg.prior {
            let path: PathBuf = cfg.output_dir.join("prior").join("prior.vtk");
            let start = Instant::now();
            if let Err(e) = run_precursor(&case.grid, &case.mask, &fs, &cfg.solver, t_end, dt, state, &path) {
                warn!("precursor run failed: {e}");
                prior_error = Some(e.to_string());
            }
            prior_wall = start.elapsed().as_secs_f64();
        }
    }

    let one = |s: &InitStrategy| -> StrategyRow {
        if let (InitStrategy::PriorSolution { .. }, Some(e)) = (s, &prior_error) {
            return StrategyRow {
                strategy: s.name().to_string(),
                outcome: Err(format!("precursor run failed: {e}")),
                init_wall: prior_wall,
                solver_wall: 0.0,
                solver_wall_to_conv: 0.0,
            };
        }
        let sur = s.surrogate_source().and(surrogate.as_ref());
        run_strategy(cfg, &case, s, sur, prior_wall)
    };
    let rows: Vec<StrategyRow> = if cfg.parallel {
        cfg.strategies.par_iter().map(one).collect()
    } else {
        cfg.strategies.iter().map(one).collect()
    };
    let table = ComparisonTable { rows };
    table.write(&cfg.output_dir)?;
    Ok(table)
}
