//! Inverse distance weighting over the K nearest samples.
//!
//! Weights are `w = 1 / (d^power + eps)`, normalised over the K nearest
//! points. A query that coincides with a sample returns that sample's value.
//! Neighbours are ordered by (distance, index) so ties resolve the same way
//! on every run.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdwParams {
    pub power: f64,
    pub k: usize,
    pub eps: f64,
}

impl IdwParams {
    /// Defaults for a domain with the given diagonal: power 2, K = 8,
    /// `eps = 1e-12 · diagonal²`.
    pub fn for_diagonal(diagonal: f64) -> Self {
        Self {
            power: 2.0,
            k: 8,
            eps: 1e-12 * diagonal * diagonal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::InvalidSurrogate(format!("IDW power must be positive (got {})", self.power)));
        }
        if self.k == 0 {
            return Err(Error::InvalidSurrogate("IDW neighbour count must be at least 1".into()));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidSurrogate(format!("IDW eps must be non-negative (got {})", self.eps)));
        }
        Ok(())
    }
}

/// Uniform bin grid over a point set.
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<(f64, f64)>,
    x0: f64,
    y0: f64,
    cell: f64,
    nbx: usize,
    nby: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl PointIndex {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::NonFinite("sample point"));
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let (w, h) = ((x1 - x0).max(0.0), (y1 - y0).max(0.0));
        let target_bins = (points.len() as f64 / 2.0).max(1.0);
        let mut cell = if w > 0.0 && h > 0.0 {
            (w * h / target_bins).sqrt()
        } else {
            w.max(h) / target_bins
        };
        if !(cell > 0.0) {
            cell = 1.0;
        }
        let nbx = ((w / cell).floor() as usize + 1).min(4096);
        let nby = ((h / cell).floor() as usize + 1).min(4096);
        let cell = cell.max(w / nbx as f64).max(h / nby as f64);
        let bin_of = |x: f64, y: f64| {
            let bx = (((x - x0) / cell) as usize).min(nbx - 1);
            let by = (((y - y0) / cell) as usize).min(nby - 1);
            by * nbx + bx
        };
        let mut counts = vec![0usize; nbx * nby + 1];
        for &(x, y) in points {
            counts[bin_of(x, y) + 1] += 1;
        }
        for b in 1..counts.len() {
            counts[b] += counts[b - 1];
        }
        let start = counts.clone();
        let mut fill = counts;
        let mut items = vec![0usize; points.len()];
        for (n, &(x, y)) in points.iter().enumerate() {
            let b = bin_of(x, y);
            items[fill[b]] = n;
            fill[b] += 1;
        }
        Ok(Self {
            points: points.to_vec(),
            x0,
            y0,
            cell,
            nbx,
            nby,
            start,
            items,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// The `k` nearest points to `q` as `(squared distance, index)`, sorted
    /// by distance then index.
    pub fn nearest(&self, q: (f64, f64), k: usize, out: &mut Vec<(f64, usize)>) {
        out.clear();
        let k = k.min(self.points.len());
        if k == 0 {
            return;
        }
        let fx = ((q.0 - self.x0) / self.cell).floor();
        let fy = ((q.1 - self.y0) / self.cell).floor();
        let bx = fx.clamp(0.0, (self.nbx - 1) as f64) as isize;
        let by = fy.clamp(0.0, (self.nby - 1) as f64) as isize;
        let (nbx, nby) = (self.nbx as isize, self.nby as isize);
        let max_r = nbx.max(nby) + 1;
        let mut r: isize = 0;
        loop {
            let (lo_x, hi_x, lo_y, hi_y) = (bx - r, bx + r, by - r, by + r);
            for cy in lo_y.max(0)..=hi_y.min(nby - 1) {
                let on_edge_y = cy == lo_y || cy == hi_y;
                let mut cx = lo_x.max(0);
                while cx <= hi_x.min(nbx - 1) {
                    if on_edge_y || cx == lo_x || cx == hi_x {
                        let b = (cy * nbx + cx) as usize;
                        for &n in &self.items[self.start[b]..self.start[b + 1]] {
                            let (px, py) = self.points[n];
                            let d2 = (px - q.0) * (px - q.0) + (py - q.1) * (py - q.1);
                            out.push((d2, n));
                        }
                        cx += 1;
                    } else {
                        cx = hi_x;
                    }
                }
            }
            let covers_all = lo_x <= 0 && lo_y <= 0 && hi_x >= nbx - 1 && hi_y >= nby - 1;
            if out.len() >= k {
                out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                out.truncate(k);
                let dk = out[k - 1].0.sqrt();
                // Region already scanned, in world coordinates; sides on the
                // grid boundary extend to infinity.
                let left = if lo_x <= 0 { f64::NEG_INFINITY } else { self.x0 + lo_x as f64 * self.cell };
                let right = if hi_x >= nbx - 1 { f64::INFINITY } else { self.x0 + (hi_x + 1) as f64 * self.cell };
                let bottom = if lo_y <= 0 { f64::NEG_INFINITY } else { self.y0 + lo_y as f64 * self.cell };
                let top = if hi_y >= nby - 1 { f64::INFINITY } else { self.y0 + (hi_y + 1) as f64 * self.cell };
                if q.0 - dk >= left && q.0 + dk <= right && q.1 - dk >= bottom && q.1 + dk <= top {
                    break;
                }
            }
            if covers_all || r > max_r {
                out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                break;
            }
            r += 1;
        }
        out.truncate(k);
    }

    /// Normalised IDW weights at `q` as `(index, weight)`.
    pub fn weights(&self, q: (f64, f64), params: &IdwParams, scratch: &mut Vec<(f64, usize)>, out: &mut Vec<(usize, f64)>) {
        out.clear();
        self.nearest(q, params.k, scratch);
        if let Some(&(d2, n)) = scratch.first() {
            if d2 == 0.0 {
                out.push((n, 1.0));
                return;
            }
        }
        let half = 0.5 * params.power;
        let mut total = 0.0;
        for &(d2, n) in scratch.iter() {
            let dp = if params.power == 2.0 { d2 } else { d2.powf(half) };
            let w = 1.0 / (dp + params.eps);
            out.push((n, w));
            total += w;
        }
        for (_, w) in out.iter_mut() {
            *w /= total;
        }
    }
}

/// Interpolates `values` (one per point) at `query`.
pub fn idw_interpolate(points: &[(f64, f64)], values: &[f64], query: (f64, f64), power: f64, k: usize, eps: f64) -> Result<f64> {
    if points.len() != values.len() {
        return Err(Error::InvalidSurrogate(format!(
            "{} points but {} values",
            points.len(),
            values.len()
        )));
    }
    let params = IdwParams { power, k, eps };
    params.validate()?;
    let index = PointIndex::new(points)?;
    let (mut scratch, mut w) = (Vec::new(), Vec::new());
    index.weights(query, &params, &mut scratch, &mut w);
    Ok(apply_weights(&w, values))
}

#[inline]
pub fn apply_weights(w: &[(usize, f64)], values: &[f64]) -> f64 {
    w.iter().map(|&(n, wt)| wt * values[n]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_weights() {
        let pts = [(1.0, 0.0), (-2.0, 0.0)];
        let v = idw_interpolate(&pts, &[0.0, 3.0], (0.0, 0.0), 2.0, 2, 0.0).unwrap();
        assert!((v - 0.6).abs() < 1e-15);
    }

    #[test]
    fn exact_at_nodes_and_constant() {
        let pts: Vec<(f64, f64)> = (0..30).map(|n| ((n as f64 * 0.37).sin(), (n as f64 * 0.91).cos())).collect();
        let vals: Vec<f64> = (0..30).map(|n| n as f64).collect();
        for n in [0, 7, 29] {
            assert_eq!(idw_interpolate(&pts, &vals, pts[n], 2.0, 8, 1e-12).unwrap(), vals[n]);
        }
        let c = vec![2.5; 30];
        let v = idw_interpolate(&pts, &c, (0.3, -0.2), 2.0, 8, 1e-12).unwrap();
        assert!((v - 2.5).abs() < 1e-14);
        assert!(matches!(idw_interpolate(&[], &[], (0.0, 0.0), 2.0, 8, 0.0), Err(Error::EmptyPointSet)));
    }

    #[test]
    fn nearest_matches_brute_force() {
        let pts: Vec<(f64, f64)> = (0..500)
            .map(|n| (((n * 7919) % 1000) as f64 / 100.0, ((n * 104729) % 1000) as f64 / 250.0))
            .collect();
        let index = PointIndex::new(&pts).unwrap();
        let mut out = Vec::new();
        for q in [(0.0, 0.0), (5.0, 2.0), (-3.0, 9.0), (12.0, -1.0), (9.99, 3.99)] {
            index.nearest(q, 8, &mut out);
            let mut brute: Vec<(f64, usize)> = pts
                .iter()
                .enumerate()
                .map(|(n, p)| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2), n))
                .collect();
            brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            brute.truncate(8);
            assert_eq!(out, brute, "query {q:?}");
        }
    }
}
