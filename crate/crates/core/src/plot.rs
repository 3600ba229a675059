//! Self-contained SVG plots of the drag histories of an experiment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::warn;

use crate::convergence::{analyze_drag, read_series_csv};
use crate::error::{Error, Result};
use crate::experiment::{SERIES_CSV, TABLE_CSV};

pub const RAW_SVG: &str = "force_raw.svg";
pub const FILTERED_SVG: &str = "force_filtered.svg";
pub const WARNINGS_LOG: &str = "plot_warnings.log";

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLOURS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub raw: Vec<f64>,
    pub filtered: Vec<f64>,
    pub t_conv: f64,
    pub conv_value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PlotReport {
    pub files: Vec<PathBuf>,
    pub plotted: Vec<String>,
    pub warnings: Vec<String>,
}

/// Strategy names to plot: the table's rows when present, else every
/// subdirectory holding a series file.
fn strategy_names(dir: &Path) -> Result<Vec<String>> {
    let table = dir.join(TABLE_CSV);
    if table.exists() {
        let mut r = csv::Reader::from_path(&table)?;
        let mut names = Vec::new();
        for rec in r.records() {
            if let Some(n) = rec?.get(0) {
                names.push(n.to_string());
            }
        }
        return Ok(names);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join(SERIES_CSV).is_file())
        .filter_map(|e| e.file_name().to_str().map(String::from))
        .collect();
    names.sort();
    Ok(names)
}

/// Loads every strategy's series; unreadable ones become warnings.
pub fn collect_series(dir: &Path, tol: f64) -> Result<(Vec<PlotSeries>, Vec<String>)> {
    if !dir.is_dir() {
        return Err(Error::NoSeries(dir.to_path_buf()));
    }
    let mut series = Vec::new();
    let mut warnings = Vec::new();
    for name in strategy_names(dir)? {
        let path = dir.join(&name).join(SERIES_CSV);
        let loaded = read_series_csv(&path).and_then(|(s, _)| {
            let (f, r) = analyze_drag(&s, tol)?;
            Ok(PlotSeries {
                name: name.clone(),
                times: f.times,
                raw: f.raw,
                conv_value: f.filtered[r.index],
                filtered: f.filtered,
                t_conv: r.t_conv,
            })
        });
        match loaded {
            Ok(s) => series.push(s),
            Err(e) => warnings.push(format!("skipped {name}: {e}")),
        }
    }
    if series.is_empty() {
        return Err(Error::NoSeries(dir.to_path_buf()));
    }
    Ok((series, warnings))
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let m = if r < 1.5 {
        1.0
    } else if r < 3.0 {
        2.0
    } else if r < 7.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

/// Data-space bounds covering every point, padded by 3%.
pub fn axis_ranges(series: &[PlotSeries], filtered: bool) -> ((f64, f64), (f64, f64)) {
    let (mut t0, mut t1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        let ys = if filtered { &s.filtered } else { &s.raw };
        for (&t, &y) in s.times.iter().zip(ys) {
            t0 = t0.min(t);
            t1 = t1.max(t);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    let pad = |a: f64, b: f64| {
        let span = if b > a { b - a } else { a.abs().max(1.0) };
        (a - 0.03 * span, b + 0.03 * span)
    };
    (pad(t0, t1), pad(y0, y1))
}

fn star(cx: f64, cy: f64, r: f64) -> String {
    let mut pts = String::new();
    for n in 0..10 {
        let rad = if n % 2 == 0 { r } else { 0.45 * r };
        let a = -std::f64::consts::FRAC_PI_2 + n as f64 * std::f64::consts::PI / 5.0;
        let _ = write!(pts, "{:.2},{:.2} ", cx + rad * a.cos(), cy + rad * a.sin());
    }
    pts.trim_end().to_string()
}

/// Renders one overlay plot.
pub fn render_svg(series: &[PlotSeries], filtered: bool, title: &str) -> String {
    let ((t0, t1), (y0, y1)) = axis_ranges(series, filtered);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |t: f64| LEFT + (t - t0) / (t1 - t0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;
    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(o, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(o, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{title}</text>"#, LEFT + pw / 2.0);
    let _ = writeln!(
        o,
        r##"<rect class="plot-area" x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    for (lo, hi, horizontal) in [(t0, t1, true), (y0, y1, false)] {
        let step = nice_step(hi - lo);
        let mut v = (lo / step).ceil() * step;
        while v <= hi {
            if horizontal {
                let x = sx(v);
                let _ = writeln!(o, r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#ddd"/>"##, TOP, TOP + ph);
                let _ = writeln!(o, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, trim_num(v));
            } else {
                let y = sy(v);
                let _ = writeln!(o, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##, LEFT + pw);
                let _ = writeln!(o, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, trim_num(v));
            }
            v += step;
        }
    }
    let _ = writeln!(o, r#"<text x="{}" y="{}" text-anchor="middle">time [s]</text>"#, LEFT + pw / 2.0, HEIGHT - 18.0);
    let _ = writeln!(
        o,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">drag per unit depth [N/m]</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    for (n, s) in series.iter().enumerate() {
        let colour = COLOURS[n % COLOURS.len()];
        let ys = if filtered { &s.filtered } else { &s.raw };
        let mut pts = String::with_capacity(16 * ys.len());
        for (&t, &y) in s.times.iter().zip(ys) {
            let _ = write!(pts, "{:.2},{:.2} ", sx(t), sy(y));
        }
        let _ = writeln!(
            o,
            r#"<polyline data-strategy="{}" fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#,
            s.name,
            pts.trim_end()
        );
        let _ = writeln!(
            o,
            r##"<polygon class="t-conv" data-strategy="{}" fill="{colour}" stroke="#000" stroke-width="0.6" points="{}"/>"##,
            s.name,
            star(sx(s.t_conv), sy(s.conv_value), 8.0)
        );
        let ly = TOP + 14.0 + 20.0 * n as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(o, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#, lx + 24.0);
        let _ = writeln!(o, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, s.name);
    }
    o.push_str("</svg>\n");
    o
}

fn trim_num(v: f64) -> String {
    let s = format!("{:.6}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Writes `force_raw.svg` and `force_filtered.svg` into `dir`. Skipped
/// strategies are listed in `plot_warnings.log`.
pub fn emit_plots(dir: &Path, tol: f64) -> Result<PlotReport> {
    let (series, warnings) = collect_series(dir, tol)?;
    let mut report = PlotReport {
        plotted: series.iter().map(|s| s.name.clone()).collect(),
        ..Default::default()
    };
    for (file, filtered, title) in [
        (RAW_SVG, false, "Drag history"),
        (FILTERED_SVG, true, "Running-median drag"),
    ] {
        let path = dir.join(file);
        std::fs::write(&path, render_svg(&series, filtered, title)).map_err(|e| Error::io(&path, e))?;
        report.files.push(path);
    }
    let log_path = dir.join(WARNINGS_LOG);
    if warnings.is_empty() {
        if log_path.exists() {
            std::fs::remove_file(&log_path).map_err(|e| Error::io(&log_path, e))?;
        }
    } else {
        for w in &warnings {
            warn!("{w}");
        }
        std::fs::write(&log_path, warnings.join("\n") + "\n").map_err(|e| Error::io(&log_path, e))?;
        report.files.push(log_path);
    }
    report.warnings = warnings;
    Ok(report)
}
