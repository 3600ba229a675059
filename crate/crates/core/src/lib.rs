//! Initialization strategies for transient incompressible flow and the
//! measurement of how long each takes to reach statistically steady forces.
//!
//! The pieces, in pipeline order: a staggered channel grid with a
//! rasterized obstacle ([`grid`]), a potential-flow reference solution
//! ([`potential`]), the explicit projection solver ([`solver`]), initial
//! fields for every strategy ([`init`], [`surrogate`], [`idw`]), the
//! running-median convergence metric ([`convergence`]) and the experiment
//! driver with its table and plots ([`experiment`], [`plot`]).

pub mod config;
pub mod convergence;
pub mod error;
pub mod experiment;
pub mod field;
pub mod grid;
pub mod idw;
pub mod init;
pub mod plot;
pub mod poisson;
pub mod potential;
pub mod snapshot;
pub mod solver;
pub mod state;
pub mod surrogate;

pub use config::{load_config, parse_config, ExperimentConfig, PriorSource, PriorState};
pub use convergence::{analyze_drag, convergence_time, running_median, to_ctu, ConvergenceReport, FilteredSeries};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ComparisonTable, RunSummary, StrategyRow};
pub use field::{Field2, ScalarField};
pub use grid::{make_grid, rasterize_obstacle, Boundary, FreestreamConditions, Grid, GridSpec, ObstacleMask, ShapeSpec};
pub use idw::{idw_interpolate, IdwParams, PointIndex};
pub use init::{
    blend_alpha, extend_surrogate_idw, extend_surrogate_uniform, init_potential, init_prior_solution,
    init_surrogate_hybrid, init_uniform, BlendParams, ExtensionParams, InitStrategy, SurrogateSource,
};
pub use plot::emit_plots;
pub use potential::{potential_k_field, solve_potential, PotentialSolution};
pub use snapshot::{read_snapshot, write_snapshot};
pub use solver::{cfl_number, compute_force, total_pressure, ForceSeries, RunOptions, RunOutput, SolverConfig, TransientSolver};
pub use state::{apply_boundary_conditions, FlowState};
pub use surrogate::{build_proxy_surrogate, load_surrogate, save_surrogate, BBox, ProxyOptions, SurrogateField};
