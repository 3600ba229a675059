//! Flow snapshots as VTK legacy ASCII structured points.
//!
//! Cell data carries `u`, `v` (interpolated to centres), `p`, `k` and the
//! total pressure `p0`. The exact staggered face velocities travel in a
//! dataset-level `FIELD` block so a snapshot reloads bit for bit. A sidecar
//! `<file>.meta` line records grid dimensions, freestream values and time.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::warn;

use crate::error::{Error, Result};
use crate::field::Field2;
use crate::grid::{FreestreamConditions, Grid};
use crate::solver::total_pressure;
use crate::state::FlowState;

const META_TAG: &str = "initlab-snapshot";

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn push_values(out: &mut String, values: &[f64]) {
    for chunk in values.chunks(8) {
        let mut first = true;
        for v in chunk {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
}

/// Renders the VTK text of a snapshot.
pub fn snapshot_to_vtk(state: &FlowState, grid: &Grid, fs: &FreestreamConditions) -> Result<String> {
    state.check_shapes(grid)?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut out = String::with_capacity(64 * nx * ny);
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "initlab snapshot t={}", state.t);
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(out, "DIMENSIONS {} {} 1", nx + 1, ny + 1);
    let _ = writeln!(out, "ORIGIN 0 0 0");
    let _ = writeln!(out, "SPACING {} {} 1", grid.dx(), grid.dy());
    let _ = writeln!(out, "FIELD FieldData 2");
    let _ = writeln!(out, "u_faces 1 {} double", (nx + 1) * ny);
    push_values(&mut out, state.u.as_slice());
    let _ = writeln!(out, "v_faces 1 {} double", nx * (ny + 1));
    push_values(&mut out, state.v.as_slice());
    let _ = writeln!(out, "CELL_DATA {}", nx * ny);
    let (uc, vc) = state.velocity_centers();
    let p0 = total_pressure(state, fs);
    for (name, f) in [("u", &uc), ("v", &vc), ("p", &state.p), ("k", &state.k), ("p0", &p0)] {
        let _ = writeln!(out, "SCALARS {name} double 1");
        let _ = writeln!(out, "LOOKUP_TABLE default");
        push_values(&mut out, f.as_slice());
    }
    Ok(out)
}

pub fn meta_line(grid: &Grid, fs: &FreestreamConditions, t: f64) -> String {
    format!(
        "{META_TAG} nx={} ny={} lx={} ly={} u_inf={} rho={} nu={} k_inf={} l0={} t={}\n",
        grid.nx(),
        grid.ny(),
        grid.lx(),
        grid.ly(),
        fs.u_inf,
        fs.rho,
        fs.nu,
        fs.k_inf,
        fs.l0,
        t
    )
}

/// Writes `path` and its `.meta` sidecar.
pub fn write_snapshot(path: &Path, state: &FlowState, grid: &Grid, fs: &FreestreamConditions) -> Result<()> {
    let text = snapshot_to_vtk(state, grid, fs)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    let meta = meta_path(path);
    std::fs::write(&meta, meta_line(grid, fs, state.t)).map_err(|e| Error::io(&meta, e))
}

/// Raw contents of a snapshot file.
#[derive(Debug, Clone)]
pub struct VtkData {
    pub dims: (usize, usize),
    pub spacing: (f64, f64),
    pub origin: (f64, f64),
    pub time: Option<f64>,
    /// Dataset-level arrays.
    pub fields: HashMap<String, Vec<f64>>,
    /// Cell arrays.
    pub cells: HashMap<String, Vec<f64>>,
}

impl VtkData {
    /// Cell counts in x and y.
    pub fn cell_dims(&self) -> (usize, usize) {
        (self.dims.0 - 1, self.dims.1 - 1)
    }
}

struct Tokens<'a> {
    source: String,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    current: std::vec::IntoIter<&'a str>,
    line: usize,
}

impl<'a> Tokens<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next(&mut self) -> Option<&'a str> {
        loop {
            if let Some(t) = self.current.next() {
                return Some(t);
            }
            let (n, l) = self.lines.next()?;
            self.line = n + 1;
            self.current = l.split_whitespace().collect::<Vec<_>>().into_iter();
        }
    }

    fn word(&mut self, what: &str) -> Result<&'a str> {
        self.next().ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn num<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let w = self.word(what)?;
        w.parse().map_err(|_| self.err(format!("expected {what}, found `{w}`")))
    }

    fn values(&mut self, n: usize, name: &str) -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = self.num(&format!("a value of {name}"))?;
            if !x.is_finite() {
                return Err(self.err(format!("non-finite value in {name}")));
            }
            v.push(x);
        }
        Ok(v)
    }
}

/// Parses the subset of the VTK legacy format that [`write_snapshot`] emits.
pub fn parse_vtk(text: &str, source: &str) -> Result<VtkData> {
    let mut lines = text.lines().enumerate().peekable();
    let perr = |line: usize, msg: &str| Error::Parse {
        path: source.to_string(),
        line,
        msg: msg.to_string(),
    };
    match lines.next() {
        Some((_, l)) if l.starts_with("# vtk DataFile") => {}
        _ => return Err(perr(1, "missing `# vtk DataFile` header")),
    }
    let title = lines.next().map(|(_, l)| l).unwrap_or("");
    let time = title
        .split_whitespace()
        .find_map(|w| w.strip_prefix("t="))
        .and_then(|t| t.parse().ok());
    match lines.next() {
        Some((_, l)) if l.trim() == "ASCII" => {}
        _ => return Err(perr(3, "only ASCII files are supported")),
    }
    let mut tk = Tokens {
        source: source.to_string(),
        lines,
        current: Vec::new().into_iter(),
        line: 3,
    };
    let (mut dims, mut spacing, mut origin) = (None, (1.0, 1.0), (0.0, 0.0));
    let mut fields = HashMap::new();
    let mut cells = HashMap::new();
    let mut in_cells: Option<usize> = None;
    while let Some(key) = tk.next() {
        match key.to_ascii_uppercase().as_str() {
            "DATASET" => {
                let kind = tk.word("dataset type")?;
                if kind != "STRUCTURED_POINTS" {
                    return Err(tk.err(format!("unsupported dataset {kind}")));
                }
            }
            "DIMENSIONS" => {
                let (a, b, c): (usize, usize, usize) = (tk.num("x dimension")?, tk.num("y dimension")?, tk.num("z dimension")?);
                if a < 2 || b < 2 || c != 1 {
                    return Err(tk.err(format!("unsupported dimensions {a} {b} {c}")));
                }
                dims = Some((a, b));
            }
            "SPACING" | "ASPECT_RATIO" => {
                spacing = (tk.num("x spacing")?, tk.num("y spacing")?);
                let _: f64 = tk.num("z spacing")?;
            }
            "ORIGIN" => {
                origin = (tk.num("x origin")?, tk.num("y origin")?);
                let _: f64 = tk.num("z origin")?;
            }
            "FIELD" => {
                let _name = tk.word("field name")?;
                let count: usize = tk.num("array count")?;
                let target = if in_cells.is_some() { &mut cells } else { &mut fields };
                for _ in 0..count {
                    let name = tk.word("array name")?.to_string();
                    let comps: usize = tk.num("component count")?;
                    let tuples: usize = tk.num("tuple count")?;
                    let _ty = tk.word("data type")?;
                    let v = tk.values(comps * tuples, &name)?;
                    target.insert(name, v);
                }
            }
            "CELL_DATA" => {
                in_cells = Some(tk.num("cell count")?);
            }
            "POINT_DATA" => return Err(tk.err("point data is not supported")),
            "SCALARS" => {
                let n = in_cells.ok_or_else(|| tk.err("SCALARS before CELL_DATA"))?;
                let name = tk.word("array name")?.to_string();
                let _ty = tk.word("data type")?;
                // Optional component count before LOOKUP_TABLE.
                let mut next = tk.word("LOOKUP_TABLE")?;
                if next != "LOOKUP_TABLE" {
                    if next != "1" {
                        return Err(tk.err(format!("array {name} must have one component")));
                    }
                    next = tk.word("LOOKUP_TABLE")?;
                }
                if next != "LOOKUP_TABLE" {
                    return Err(tk.err(format!("expected LOOKUP_TABLE, found `{next}`")));
                }
                let _table = tk.word("lookup table name")?;
                let v = tk.values(n, &name)?;
                cells.insert(name, v);
            }
            other => return Err(tk.err(format!("unexpected keyword `{other}`"))),
        }
    }
    let dims = dims.ok_or_else(|| perr(tk.line, "missing DIMENSIONS"))?;
    if let Some(n) = in_cells {
        if n != (dims.0 - 1) * (dims.1 - 1) {
            return Err(perr(tk.line, "CELL_DATA count does not match DIMENSIONS"));
        }
    }
    Ok(VtkData {
        dims,
        spacing,
        origin,
        time,
        fields,
        cells,
    })
}

/// Sidecar values as key/value pairs, or `None` when there is no sidecar.
pub fn read_meta(path: &Path) -> Result<Option<HashMap<String, f64>>> {
    let meta = meta_path(path);
    let text = match std::fs::read_to_string(&meta) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(&meta, e)),
    };
    let line = text.lines().next().unwrap_or("");
    let mut words = line.split_whitespace();
    if words.next() != Some(META_TAG) {
        return Err(Error::Parse {
            path: meta.display().to_string(),
            line: 1,
            msg: format!("expected `{META_TAG}` tag"),
        });
    }
    let mut map = HashMap::new();
    for w in words {
        let parsed = w.split_once('=').and_then(|(k, v)| v.parse::<f64>().ok().map(|v| (k.to_string(), v)));
        let (k, v) = parsed.ok_or_else(|| Error::Parse {
            path: meta.display().to_string(),
            line: 1,
            msg: format!("bad entry `{w}`"),
        })?;
        map.insert(k, v);
    }
    Ok(Some(map))
}

/// Bilinear sample of a lattice with `n = (nx, ny)` nodes at
/// `origin + (i, j)·h`; queries outside clamp to the edge.
fn bilinear(data: &[f64], n: (usize, usize), origin: (f64, f64), h: (f64, f64), q: (f64, f64)) -> f64 {
    let coord = |x: f64, o: f64, h: f64, n: usize| -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let s = ((x - o) / h).clamp(0.0, (n - 1) as f64);
        let i0 = (s.floor() as usize).min(n - 2);
        (i0, i0 + 1, s - i0 as f64)
    };
    let (i0, i1, fx) = coord(q.0, origin.0, h.0, n.0);
    let (j0, j1, fy) = coord(q.1, origin.1, h.1, n.1);
    let at = |i: usize, j: usize| data[j * n.0 + i];
    let bottom = at(i0, j0) * (1.0 - fx) + at(i1, j0) * fx;
    let top = at(i0, j1) * (1.0 - fx) + at(i1, j1) * fx;
    bottom * (1.0 - fy) + top * fy
}

/// Loads a snapshot onto `grid`. Same-resolution files with face data load
/// exactly; other resolutions are bilinearly interpolated. A missing `k`
/// array gives `k ≡ k∞`.
pub fn read_snapshot(path: &Path, grid: &Grid, fs: &FreestreamConditions) -> Result<FlowState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let data = parse_vtk(&text, &path.display().to_string())?;
    let (snx, sny) = data.cell_dims();
    let (slx, sly) = (snx as f64 * data.spacing.0, sny as f64 * data.spacing.1);
    let tol = 1e-9 * grid.lx().max(grid.ly());
    let mismatch = |what: String| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        msg: what,
    };
    if (slx - grid.lx()).abs() > tol || (sly - grid.ly()).abs() > tol || data.origin.0.abs() > tol || data.origin.1.abs() > tol {
        return Err(mismatch(format!(
            "snapshot domain {slx}x{sly} does not match grid domain {}x{}",
            grid.lx(),
            grid.ly()
        )));
    }
    if let Some(meta) = read_meta(path)? {
        if meta.get("nx").copied() != Some(snx as f64) || meta.get("ny").copied() != Some(sny as f64) {
            return Err(mismatch("sidecar dimensions disagree with the snapshot".into()));
        }
        if meta.get("u_inf").is_some_and(|&u| (u - fs.u_inf).abs() > 1e-9 * fs.u_inf) {
            warn!("{}: snapshot freestream speed differs from the case", path.display());
        }
    }
    let cells = |name: &str| -> Option<&Vec<f64>> { data.cells.get(name).filter(|v| v.len() == snx * sny) };
    let p_src = cells("p").ok_or_else(|| mismatch("snapshot has no p array".into()))?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let (sdx, sdy) = data.spacing;
    let same = snx == nx && sny == ny;
    let centre_origin = (0.5 * sdx, 0.5 * sdy);
    let resample = |src: &[f64]| -> Field2 {
        if same {
            Field2::from_vec(nx, ny, src.to_vec())
        } else {
            Field2::from_fn(nx, ny, |i, j| bilinear(src, (snx, sny), centre_origin, (sdx, sdy), grid.cell_center(i, j)))
        }
    };
    let u_faces = data.fields.get("u_faces").filter(|v| v.len() == (snx + 1) * sny);
    let v_faces = data.fields.get("v_faces").filter(|v| v.len() == snx * (sny + 1));
    let u = match (u_faces, cells("u")) {
        (Some(f), _) if same => Field2::from_vec(nx + 1, ny, f.clone()),
        (Some(f), _) => Field2::from_fn(nx + 1, ny, |i, j| {
            bilinear(f, (snx + 1, sny), (0.0, 0.5 * sdy), (sdx, sdy), grid.u_face(i, j))
        }),
        (None, Some(c)) => Field2::from_fn(nx + 1, ny, |i, j| bilinear(c, (snx, sny), centre_origin, (sdx, sdy), grid.u_face(i, j))),
        (None, None) => return Err(mismatch("snapshot has no u data".into())),
    };
    let v = match (v_faces, cells("v")) {
        (Some(f), _) if same => Field2::from_vec(nx, ny + 1, f.clone()),
        (Some(f), _) => Field2::from_fn(nx, ny + 1, |i, j| {
            bilinear(f, (snx, sny + 1), (0.5 * sdx, 0.0), (sdx, sdy), grid.v_face(i, j))
        }),
        (None, Some(c)) => Field2::from_fn(nx, ny + 1, |i, j| bilinear(c, (snx, sny), centre_origin, (sdx, sdy), grid.v_face(i, j))),
        (None, None) => return Err(mismatch("snapshot has no v data".into())),
    };
    let k = match cells("k") {
        Some(k) => resample(k).map(|x| x.max(0.0)),
        None => Field2::new(nx, ny, fs.k_inf),
    };
    Ok(FlowState {
        u,
        v,
        p: resample(p_src),
        k,
        t: data.time.unwrap_or(0.0),
    })
}
