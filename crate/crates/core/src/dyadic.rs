//! Tables of `Y` over dyadic intervals and a frequency lattice.
//!
//! Cells are indexed in heap order: interval `[k 2^-n, (k+1) 2^-n]` is cell
//! `2^n - 1 + k`. Lattice points are the frequencies `j 2^-m_max` with
//! `|j 2^-m_max|` within the per-coordinate radius; a point lies on the
//! coarser lattice `2^-m` when every index is a multiple of `2^(m_max - m)`.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::oscillatory::{segment_integrals_unchecked, Frequency, OscillatoryValue};
use crate::path::{fmt_f64, SampledPath};

pub const DEFAULT_ENTRY_BUDGET: usize = 1 << 24;

const MAGIC: &[u8; 4] = b"YDYT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub n_max: u32,
    pub m_max: u32,
    pub omega_max: f64,
    pub xi_max: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self {
            n_max: 8,
            m_max: 3,
            omega_max: 32.0,
            xi_max: 32.0,
        }
    }
}

impl Truncation {
    pub fn new(n_max: u32, m_max: u32, omega_max: f64, xi_max: f64) -> Self {
        Self {
            n_max,
            m_max,
            omega_max,
            xi_max,
        }
    }

    pub fn validate(&self, path: &SampledPath) -> Result<()> {
        if self.n_max > path.depth() {
            return domain(format!(
                "n_max = {} exceeds the grid depth {}",
                self.n_max,
                path.depth()
            ));
        }
        if !(self.omega_max >= 0.0 && self.xi_max >= 0.0) {
            return domain("lattice radii must be nonnegative");
        }
        if self.m_max > 30 {
            return domain("m_max is limited to 30");
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        (1usize << (self.n_max + 1)) - 1
    }

    fn half_width(&self, radius: f64) -> i64 {
        (radius * (1u64 << self.m_max) as f64 + 1e-9).floor() as i64
    }

    pub fn lattice_size(&self, dim: usize) -> usize {
        let jw = 2 * self.half_width(self.omega_max) as usize + 1;
        let jx = 2 * self.half_width(self.xi_max) as usize + 1;
        jw.saturating_mul(jx.saturating_pow(dim as u32))
    }

    /// Every lattice point, omega index varying slowest.
    pub fn lattice(&self, dim: usize) -> Vec<LatticePoint> {
        let jw = self.half_width(self.omega_max);
        let jx = self.half_width(self.xi_max);
        let scale = 1.0 / (1u64 << self.m_max) as f64;
        let mut out = Vec::with_capacity(self.lattice_size(dim));
        let mut idx = vec![0i64; dim + 1];
        idx[0] = -jw;
        idx[1..].fill(-jx);
        loop {
            out.push(LatticePoint::new(idx.clone(), scale, self.m_max));
            let mut c = dim;
            loop {
                let lim = if c == 0 { jw } else { jx };
                if idx[c] < lim {
                    idx[c] += 1;
                    break;
                }
                idx[c] = -lim;
                if c == 0 {
                    return out;
                }
                c -= 1;
            }
        }
    }
}

/// A frequency on the truncated lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticePoint {
    /// Integer coordinates `(j_omega, j_xi_1, ..)` at resolution `2^-m_max`.
    pub index: Vec<i64>,
    pub freq: Frequency,
    /// Smallest `m` whose lattice contains this point.
    pub coarsest_level: u32,
}

impl LatticePoint {
    fn new(index: Vec<i64>, scale: f64, m_max: u32) -> Self {
        let freq = Frequency {
            omega: index[0] as f64 * scale,
            xi: index[1..].iter().map(|&j| j as f64 * scale).collect(),
        };
        let mut coarsest = m_max;
        while coarsest > 0 {
            let div = 1i64 << (m_max - coarsest + 1);
            if index.iter().all(|j| j % div == 0) {
                coarsest -= 1;
            } else {
                break;
            }
        }
        Self {
            index,
            freq,
            coarsest_level: coarsest,
        }
    }

    /// Lexicographically positive (or zero) half of the symmetric lattice.
    pub fn is_canonical(&self) -> bool {
        match self.index.iter().find(|&&j| j != 0) {
            None => true,
            Some(&j) => j > 0,
        }
    }

    pub fn is_origin(&self) -> bool {
        self.index.iter().all(|&j| j == 0)
    }
}

/// `Y` over every dyadic cell down to `n_max`, built from the finest level up.
pub fn dyadic_column(path: &SampledPath, n_max: u32, freq: &Frequency) -> Vec<Complex64> {
    let n_cells = (1usize << (n_max + 1)) - 1;
    let mut cells = vec![Complex64::new(0.0, 0.0); n_cells];
    let segs = segment_integrals_unchecked(path, freq, 0, path.n_grid());
    let leaves = 1usize << n_max;
    let per_leaf = path.n_grid() / leaves;
    let base = leaves - 1;
    for (k, chunk) in segs.chunks(per_leaf).enumerate() {
        cells[base + k] = chunk.iter().sum();
    }
    for n in (0..n_max).rev() {
        let first = (1usize << n) - 1;
        for k in 0..(1usize << n) {
            let child = 2 * (first + k) + 1;
            cells[first + k] = cells[child] + cells[child + 1];
        }
    }
    cells
}

#[inline]
pub fn cell_index(n: u32, k: usize) -> usize {
    (1usize << n) - 1 + k
}

/// Level and offset of a heap-ordered cell.
#[inline]
pub fn cell_level(cell: usize) -> (u32, usize) {
    let n = usize::BITS - 1 - (cell + 1).leading_zeros();
    (n, cell + 1 - (1usize << n))
}

/// Anything that can enumerate `(lattice point, multiplicity, column)` triples.
///
/// The multiplicity lets a source visit only half of the conjugation-symmetric
/// lattice: `|Y(-omega, -xi)| = |Y(omega, xi)|`.
pub trait DyadicSource: Sync {
    fn truncation(&self) -> Truncation;
    fn dim(&self) -> usize;
    fn map_columns<R: Send>(
        &self,
        f: &(dyn Fn(&LatticePoint, f64, &[Complex64]) -> R + Sync),
    ) -> Vec<R>;
}

/// Materialized table.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicYTable {
    truncation: Truncation,
    dim: usize,
    points: Vec<LatticePoint>,
    entries: Vec<Complex64>,
}

impl DyadicYTable {
    pub fn truncation_ref(&self) -> &Truncation {
        &self.truncation
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    pub fn n_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn column(&self, point: usize) -> &[Complex64] {
        let n = self.truncation.n_cells();
        &self.entries[point * n..(point + 1) * n]
    }

    pub fn get(&self, n: u32, k: usize, point: usize) -> OscillatoryValue {
        OscillatoryValue {
            value: self.column(point)[cell_index(n, k)],
            abs_error_bound: 0.0,
        }
    }

    /// Position of a lattice point given its integer coordinates.
    pub fn find(&self, index: &[i64]) -> Option<usize> {
        self.points.iter().position(|p| p.index == index)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        for v in [
            FORMAT_VERSION,
            self.dim as u32,
            self.truncation.n_max,
            self.truncation.m_max,
        ] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.truncation.omega_max.to_le_bytes())?;
        out.write_all(&self.truncation.xi_max.to_le_bytes())?;
        out.write_all(&(self.points.len() as u64).to_le_bytes())?;
        out.write_all(&(self.truncation.n_cells() as u64).to_le_bytes())?;
        for p in &self.points {
            out.write_all(&p.freq.omega.to_le_bytes())?;
            for x in &p.freq.xi {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        for e in &self.entries {
            out.write_all(&e.re.to_le_bytes())?;
            out.write_all(&e.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a dyadic table file".into()));
        }
        let mut u32s = [0u32; 4];
        for v in u32s.iter_mut() {
            let mut b = [0u8; 4];
            input.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b);
        }
        let [version, dim, n_max, m_max] = u32s;
        if version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported table version {version}")));
        }
        let read_f64 = |input: &mut R| -> Result<f64> {
            let mut b = [0u8; 8];
            input.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let omega_max = read_f64(&mut input)?;
        let xi_max = read_f64(&mut input)?;
        let mut b = [0u8; 8];
        input.read_exact(&mut b)?;
        let n_points = u64::from_le_bytes(b) as usize;
        input.read_exact(&mut b)?;
        let n_cells = u64::from_le_bytes(b) as usize;
        let truncation = Truncation::new(n_max, m_max, omega_max, xi_max);
        if n_cells != truncation.n_cells() || n_points != truncation.lattice_size(dim as usize) {
            return Err(Error::Parse("table header is inconsistent".into()));
        }
        let points = truncation.lattice(dim as usize);
        for p in &points {
            let omega = read_f64(&mut input)?;
            let mut ok = omega == p.freq.omega;
            for x in &p.freq.xi {
                ok &= read_f64(&mut input)? == *x;
            }
            if !ok {
                return Err(Error::Parse(
                    "lattice point does not match the header".into(),
                ));
            }
        }
        let mut entries = Vec::with_capacity(n_points * n_cells);
        for _ in 0..n_points * n_cells {
            let re = read_f64(&mut input)?;
            let im = read_f64(&mut input)?;
            entries.push(Complex64::new(re, im));
        }
        Ok(Self {
            truncation,
            dim: dim as usize,
            points,
            entries,
        })
    }

    /// `n,k,omega,xi1..,re,im,abs_err`, one row per entry.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let xi: Vec<String> = (1..=self.dim).map(|i| format!("xi{i}")).collect();
        writeln!(out, "n,k,omega,{},re,im,abs_err", xi.join(","))?;
        for (p, point) in self.points.iter().enumerate() {
            let col = self.column(p);
            let xs: Vec<String> = point.freq.xi.iter().map(|v| fmt_f64(*v)).collect();
            for (cell, y) in col.iter().enumerate() {
                let (n, k) = cell_level(cell);
                writeln!(
                    out,
                    "{n},{k},{},{},{},{},{}",
                    fmt_f64(point.freq.omega),
                    xs.join(","),
                    fmt_f64(y.re),
                    fmt_f64(y.im),
                    fmt_f64(0.0)
                )?;
            }
        }
        Ok(())
    }
}

impl DyadicSource for DyadicYTable {
    fn truncation(&self) -> Truncation {
        self.truncation
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn map_columns<R: Send>(
        &self,
        f: &(dyn Fn(&LatticePoint, f64, &[Complex64]) -> R + Sync),
    ) -> Vec<R> {
        self.points
            .par_iter()
            .enumerate()
            .map(|(i, p)| f(p, 1.0, self.column(i)))
            .collect()
    }
}

/// Computes columns on demand, visiting half of the lattice.
#[derive(Debug, Clone, Copy)]
pub struct StreamingDyadic<'a> {
    path: &'a SampledPath,
    truncation: Truncation,
}

impl<'a> StreamingDyadic<'a> {
    pub fn new(path: &'a SampledPath, truncation: Truncation) -> Result<Self> {
        truncation.validate(path)?;
        Ok(Self { path, truncation })
    }
}

impl DyadicSource for StreamingDyadic<'_> {
    fn truncation(&self) -> Truncation {
        self.truncation
    }

    fn dim(&self) -> usize {
        self.path.dim()
    }

    fn map_columns<R: Send>(
        &self,
        f: &(dyn Fn(&LatticePoint, f64, &[Complex64]) -> R + Sync),
    ) -> Vec<R> {
        let points: Vec<LatticePoint> = self
            .truncation
            .lattice(self.path.dim())
            .into_iter()
            .filter(LatticePoint::is_canonical)
            .collect();
        points
            .par_iter()
            .map(|p| {
                let col = dyadic_column(self.path, self.truncation.n_max, &p.freq);
                let mult = if p.is_origin() { 1.0 } else { 2.0 };
                f(p, mult, &col)
            })
            .collect()
    }
}

/// Materializes the table, failing before allocation if it exceeds `budget` entries.
pub fn build_dyadic_table(
    path: &SampledPath,
    truncation: Truncation,
    budget: usize,
) -> Result<DyadicYTable> {
    truncation.validate(path)?;
    let n_points = truncation.lattice_size(path.dim());
    let requested = n_points.saturating_mul(truncation.n_cells());
    if requested > budget {
        return Err(Error::Resource { requested, budget });
    }
    let points = truncation.lattice(path.dim());
    let columns: Vec<Vec<Complex64>> = points
        .par_iter()
        .map(|p| dyadic_column(path, truncation.n_max, &p.freq))
        .collect();
    Ok(DyadicYTable {
        truncation,
        dim: path.dim(),
        points,
        entries: columns.into_iter().flatten().collect(),
    })
}
