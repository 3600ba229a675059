//! Running-median filtering of force histories and the forward-looking
//! convergence time.
//!
//! The filter at sample `i` is the median of the most recent
//! `w = ceil(2(i+1)/3)` raw samples. A series has converged at the first
//! sample after which every filtered value stays within `tol` of the final
//! filtered value.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::FreestreamConditions;
use crate::solver::ForceSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredSeries {
    pub times: Vec<f64>,
    pub raw: Vec<f64>,
    pub filtered: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub t_conv: f64,
    /// Index of `t_conv` in the series.
    pub index: usize,
    pub t_conv_ctu: Option<f64>,
    pub final_value: f64,
    pub tol: f64,
    /// True when the final value is zero and the band is
    /// `tol · max|raw|` instead of `tol · |final|`.
    pub absolute: bool,
}

impl ConvergenceReport {
    pub fn with_ctu(mut self, fs: &FreestreamConditions) -> Self {
        self.t_conv_ctu = Some(to_ctu(self.t_conv, fs));
        self
    }
}

/// Number of samples in the filter window ending at index `i`.
#[inline]
pub fn window_len(i: usize) -> usize {
    (2 * (i + 1)).div_ceil(3)
}

/// Median of a sorted, nonempty slice; even lengths take the midpoint of the
/// central pair.
#[inline]
pub fn sorted_median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn check_series(times: &[f64], raw: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::EmptySeries);
    }
    if times.len() != raw.len() {
        return Err(Error::InvalidSeries(format!(
            "{} times but {} values",
            times.len(),
            raw.len()
        )));
    }
    if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidSeries(format!("times not increasing at index {}", k + 1)));
    }
    if let Some(k) = raw.iter().chain(times).position(|v| !v.is_finite()) {
        return Err(Error::InvalidSeries(format!("non-finite entry at position {k}")));
    }
    Ok(())
}

/// Running median over the most recent two thirds of the samples.
pub fn running_median(times: &[f64], raw: &[f64]) -> Result<FilteredSeries> {
    check_series(times, raw)?;
    let mut window: Vec<f64> = Vec::new();
    let mut filtered = Vec::with_capacity(raw.len());
    let mut start = 0;
    for (i, &x) in raw.iter().enumerate() {
        let pos = window.partition_point(|v| v.total_cmp(&x).is_lt());
        window.insert(pos, x);
        let new_start = i + 1 - window_len(i);
        for old in &raw[start..new_start] {
            let at = window.partition_point(|v| v.total_cmp(old).is_lt());
            window.remove(at);
        }
        start = new_start;
        filtered.push(sorted_median(&window));
    }
    Ok(FilteredSeries {
        times: times.to_vec(),
        raw: raw.to_vec(),
        filtered,
    })
}

/// Earliest time after which the filtered series stays inside the band
/// around its final value.
pub fn convergence_time(fs: &FilteredSeries, tol: f64) -> Result<ConvergenceReport> {
    if fs.filtered.is_empty() {
        return Err(Error::EmptySeries);
    }
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::InvalidSeries(format!("tolerance must be non-negative (got {tol})")));
    }
    let last = fs.filtered.len() - 1;
    let final_value = fs.filtered[last];
    let absolute = final_value == 0.0;
    let band = band_width(fs, tol);
    let mut j = last;
    while j > 0 && (fs.filtered[j - 1] - final_value).abs() <= band {
        j -= 1;
    }
    Ok(ConvergenceReport {
        t_conv: fs.times[j],
        index: j,
        t_conv_ctu: None,
        final_value,
        tol,
        absolute,
    })
}

/// Half-width of the convergence band. The band is closed; the relative
/// slack keeps values such as `1.01` against a final value of `1.0` inside
/// `tol = 0.01` despite round-off in the subtraction.
pub fn band_width(fs: &FilteredSeries, tol: f64) -> f64 {
    let final_value = fs.filtered[fs.filtered.len() - 1];
    let base = if final_value == 0.0 {
        fs.raw.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    } else {
        final_value.abs()
    };
    tol * base * (1.0 + BAND_SLACK)
}

pub const BAND_SLACK: f64 = 1e-12;

/// Elapsed convective time units, `t · U∞ / l₀`.
pub fn to_ctu(t: f64, fs: &FreestreamConditions) -> f64 {
    t * fs.u_inf / fs.l0
}

/// Filters the drag component of a force series and reports its convergence.
pub fn analyze_drag(series: &ForceSeries, tol: f64) -> Result<(FilteredSeries, ConvergenceReport)> {
    let filtered = running_median(&series.times, &series.fx)?;
    let report = convergence_time(&filtered, tol)?;
    Ok((filtered, report))
}

/// Writes `t,fx,fy` and, when given, a `filtered` column.
pub fn write_series_csv(path: &Path, series: &ForceSeries, filtered: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header = vec!["t", "fx", "fy"];
    if filtered.is_some() {
        header.push("filtered");
    }
    w.write_record(&header)?;
    for n in 0..series.len() {
        let mut rec = vec![
            series.times[n].to_string(),
            series.fx[n].to_string(),
            series.fy[n].to_string(),
        ];
        if let Some(f) = filtered {
            rec.push(f[n].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a series written by [`write_series_csv`]. The `filtered` column is
/// returned when present.
pub fn read_series_csv(path: &Path) -> Result<(ForceSeries, Option<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(ct), Some(cx), Some(cy)) = (col("t"), col("fx"), col("fy")) else {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            msg: "header must contain t, fx, fy".into(),
        });
    };
    let cf = col("filtered");
    let mut series = ForceSeries::default();
    let mut filtered = cf.map(|_| Vec::new());
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    line,
                    msg: format!("column {} is not a number", c + 1),
                })
        };
        let (t, fx, fy) = (num(ct)?, num(cx)?, num(cy)?);
        series.push(t, fx, fy).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line,
            msg: e.to_string(),
        })?;
        if let (Some(c), Some(f)) = (cf, filtered.as_mut()) {
            f.push(num(c)?);
        }
    }
    Ok((series, filtered))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: format!("{other:?}"),
        },
    }
}
