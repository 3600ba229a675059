use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid freestream conditions: {0}")]
    InvalidFreestream(String),

    #[error("invalid obstacle: {0}")]
    InvalidShape(String),

    #[error("empty obstacle")]
    EmptyObstacle,

    #[error("shape mismatch for {field}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        field: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("potential solve did not converge after {iterations} iterations (residual {:.3e})", residuals.last().copied().unwrap_or(f64::NAN))]
    PotentialNotConverged {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("pressure solve did not converge (residual {residual:.3e})")]
    PoissonNotConverged { residual: f64 },

    #[error("CFL {cfl:.4} exceeds limit {limit} at cell ({i}, {j})")]
    CflViolation {
        cfl: f64,
        limit: f64,
        i: usize,
        j: usize,
    },

    #[error("invalid solver configuration: {0}")]
    InvalidSolverConfig(String),

    #[error("at t = {time:.6}: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid blend parameters: {0}")]
    InvalidBlend(String),

    #[error("invalid surrogate: {0}")]
    InvalidSurrogate(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("empty point set")]
    EmptyPointSet,

    #[error("empty series")]
    EmptySeries,

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("config error at line {line}, column {column}: {msg}")]
    ConfigSyntax {
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("unknown key {key} at line {line}")]
    UnknownKey { key: String, line: usize },

    #[error("invalid config field {field}: {msg}")]
    ConfigField { field: String, msg: String },

    #[error("no series found in {0}")]
    NoSeries(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_time(self, time: f64) -> Self {
        Error::AtTime {
            time,
            source: Box::new(self),
        }
    }
}
