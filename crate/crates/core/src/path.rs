//! Paths sampled on a uniform dyadic grid of `[0, 1]`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// How values between grid points are reconstructed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    #[default]
    PiecewiseLinear,
}

/// A `d`-dimensional path on the grid `k / n_grid`, `k = 0..=n_grid`.
///
/// Values are stored row-major: grid point `k` occupies
/// `values[k * dim..(k + 1) * dim]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledPath {
    n_grid: usize,
    dim: usize,
    values: Vec<f64>,
    #[serde(default)]
    interpolation: Interpolation,
}

impl SampledPath {
    pub fn new(n_grid: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if !n_grid.is_power_of_two() {
            return domain(format!("grid size {n_grid} is not a power of two"));
        }
        if dim == 0 {
            return domain("path dimension must be at least 1");
        }
        if values.len() != (n_grid + 1) * dim {
            return domain(format!(
                "expected {} values for a {}-dimensional path on {} steps, got {}",
                (n_grid + 1) * dim,
                dim,
                n_grid,
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("path values must be finite");
        }
        Ok(Self {
            n_grid,
            dim,
            values,
            interpolation: Interpolation::PiecewiseLinear,
        })
    }

    /// Builds a path by evaluating `f(t)` at every grid time.
    pub fn from_fn<F: FnMut(f64) -> Vec<f64>>(n_grid: usize, dim: usize, mut f: F) -> Result<Self> {
        let mut values = Vec::with_capacity((n_grid + 1) * dim);
        for k in 0..=n_grid {
            let v = f(k as f64 / n_grid as f64);
            if v.len() != dim {
                return domain("closure returned a vector of the wrong dimension");
            }
            values.extend(v);
        }
        Self::new(n_grid, dim, values)
    }

    /// The path identically equal to `x`.
    pub fn constant(n_grid: usize, x: &[f64]) -> Result<Self> {
        Self::from_fn(n_grid, x.len(), |_| x.to_vec())
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    /// `log2(n_grid)`.
    pub fn depth(&self) -> u32 {
        self.n_grid.trailing_zeros()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn step(&self) -> f64 {
        1.0 / self.n_grid as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.n_grid as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_grid).map(|k| self.time(k)).collect()
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Linear interpolation at an arbitrary time in `[0, 1]`.
    pub fn value_at(&self, t: f64, out: &mut [f64]) {
        let x = (t * self.n_grid as f64).clamp(0.0, self.n_grid as f64);
        let k = (x.floor() as usize).min(self.n_grid - 1);
        let frac = x - k as f64;
        let (a, b) = (self.value(k), self.value(k + 1));
        for i in 0..self.dim {
            out[i] = a[i] + frac * (b[i] - a[i]);
        }
    }

    /// Converts a time to a grid index, rejecting off-grid times.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&t) {
            return domain(format!("time {t} outside [0, 1]"));
        }
        let x = t * self.n_grid as f64;
        let k = x.round();
        if (x - k).abs() > 1e-9 * self.n_grid as f64 {
            return domain(format!(
                "time {t} is not on the grid of {} steps",
                self.n_grid
            ));
        }
        Ok(k as usize)
    }

    /// Validates `s < t` on the grid and returns their indices.
    pub fn interval(&self, s: f64, t: f64) -> Result<(usize, usize)> {
        if s >= t {
            return domain(format!("empty interval: s = {s} >= t = {t}"));
        }
        Ok((self.index_of(s)?, self.index_of(t)?))
    }

    /// Pointwise sum of two paths on the same grid.
    pub fn add(&self, other: &SampledPath) -> Result<SampledPath> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        SampledPath::new(self.n_grid, self.dim, values)
    }

    /// Pointwise difference `self - other`.
    pub fn sub(&self, other: &SampledPath) -> Result<SampledPath> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        SampledPath::new(self.n_grid, self.dim, values)
    }

    /// Keeps every `2^levels`-th grid point.
    pub fn coarsen(&self, levels: u32) -> Result<SampledPath> {
        if levels > self.depth() {
            return domain("cannot coarsen below a single step");
        }
        let stride = 1usize << levels;
        let n = self.n_grid / stride;
        let mut values = Vec::with_capacity((n + 1) * self.dim);
        for k in 0..=n {
            values.extend_from_slice(self.value(k * stride));
        }
        SampledPath::new(n, self.dim, values)
    }

    /// Sup norm of `self - other` over grid points.
    pub fn sup_distance(&self, other: &SampledPath) -> Result<f64> {
        self.check_compatible(other)?;
        Ok((0..=self.n_grid)
            .map(|k| euclid_dist(self.value(k), other.value(k)))
            .fold(0.0, f64::max))
    }

    fn check_compatible(&self, other: &SampledPath) -> Result<()> {
        if self.n_grid != other.n_grid || self.dim != other.dim {
            return domain(format!(
                "incompatible paths: {}x{} vs {}x{}",
                self.n_grid, self.dim, other.n_grid, other.dim
            ));
        }
        Ok(())
    }

    /// Writes `t,w1,...,wd` CSV with 17 significant digits. Lines in
    /// `preamble` are emitted first as `# ` comments.
    pub fn write_csv<W: Write>(&self, mut out: W, prefix: &str, preamble: &[String]) -> Result<()> {
        for line in preamble {
            writeln!(out, "# {line}")?;
        }
        let header: Vec<String> = (1..=self.dim).map(|i| format!("{prefix}{i}")).collect();
        writeln!(out, "t,{}", header.join(","))?;
        for k in 0..=self.n_grid {
            let row: Vec<String> = self.value(k).iter().map(|v| fmt_f64(*v)).collect();
            writeln!(out, "{},{}", fmt_f64(self.time(k)), row.join(","))?;
        }
        Ok(())
    }

    /// Reads the format produced by [`SampledPath::write_csv`]; `#` lines are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut dim = None;
        let mut values = Vec::new();
        let mut rows = 0usize;
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if dim.is_none() {
                let cols = line.split(',').count();
                if cols < 2 {
                    return Err(Error::Parse(
                        "path CSV header needs at least two columns".into(),
                    ));
                }
                dim = Some(cols - 1);
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != dim.unwrap() + 1 {
                return Err(Error::Parse(format!(
                    "row {rows} has {} columns",
                    fields.len()
                )));
            }
            for f in &fields[1..] {
                values.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {rows}: {e}")))?,
                );
            }
            rows += 1;
        }
        let dim = dim.ok_or_else(|| Error::Parse("empty path CSV".into()))?;
        if rows < 2 {
            return Err(Error::Parse("path CSV needs at least two rows".into()));
        }
        SampledPath::new(rows - 1, dim, values)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn euclid_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn euclid_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_dyadic_grids() {
        assert!(SampledPath::new(3, 1, vec![0.0; 4]).is_err());
        assert!(SampledPath::new(4, 1, vec![0.0; 4]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = SampledPath::from_fn(8, 2, |t| vec![t.sin() / 3.0, (7.0 * t).exp()]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf, "w", &["config: {}".to_string()])
            .unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap() == "t,w1,w2");
        let q = SampledPath::read_csv(&buf[..]).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn grid_snapping() {
        let p = SampledPath::constant(16, &[0.0]).unwrap();
        assert_eq!(p.index_of(0.25).unwrap(), 4);
        assert!(p.index_of(0.3).is_err());
        assert!(p.interval(0.5, 0.5).is_err());
        assert!(p.index_of(1.5).is_err());
    }

    #[test]
    fn interpolation_is_linear_between_nodes() {
        let p = SampledPath::from_fn(4, 1, |t| vec![t * t]).unwrap();
        let mut out = [0.0];
        p.value_at(0.375, &mut out);
        assert!((out[0] - 0.5 * (0.0625 + 0.25)).abs() < 1e-15);
        p.value_at(1.0, &mut out);
        assert_eq!(out[0], 1.0);
    }
}
