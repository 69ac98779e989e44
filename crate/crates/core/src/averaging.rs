//! Time averages of Fourier-atom fields along a path,
//! `(sigma_{[s,t]} b)(x) = int_s^t b(u, w_u + x) du`, and the averaging constant.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dyadic::{cell_level, DyadicSource, Truncation};
use crate::error::{domain, Result};
use crate::field::FourierVectorField;
use crate::oscillatory::{eval_y_indices, segment_integrals_unchecked, Frequency};
use crate::path::{dot, SampledPath};
use crate::young::{FieldExponents, IncrementField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedFieldValue {
    pub value: Vec<f64>,
    /// Norm of the imaginary part discarded when taking the real part.
    pub imag_residual: f64,
}

fn atom_frequency(a: &crate::field::Atom) -> Frequency {
    Frequency {
        omega: a.omega,
        xi: a.xi.clone(),
    }
}

/// `Re sum_j c_j Y_{s,t}(omega_j, xi_j) exp(i xi_j . x)`.
pub fn averaged_field(
    f: &FourierVectorField,
    path: &SampledPath,
    s: f64,
    t: f64,
    x: &[f64],
) -> Result<AveragedFieldValue> {
    let (a, b) = path.interval(s, t)?;
    if f.dim() != path.dim() || x.len() != path.dim() {
        return domain("field, path and point must share a dimension");
    }
    let mut re = vec![0.0; f.dim()];
    let mut im = vec![0.0; f.dim()];
    for atom in f.atoms() {
        let y = eval_y_indices(path, a, b, &atom_frequency(atom)).value;
        let e = y * Complex64::from_polar(1.0, dot(&atom.xi, x));
        for (i, c) in atom.c.iter().enumerate() {
            let z = c * e;
            re[i] += z.re;
            im[i] += z.im;
        }
    }
    Ok(AveragedFieldValue {
        value: re,
        imag_residual: crate::path::euclid_norm(&im),
    })
}

/// Result of [`estimate_averaging_constant`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingEstimate {
    /// Truncated supremum; a lower estimate of the true constant.
    pub k: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub truncation: Truncation,
}

/// `max |Y| / [(1+|xi|)^alpha (1 + log^{1/2}(1+|omega|)) (t-s)^gamma]`
/// over every dyadic cell and lattice frequency of the source.
pub fn estimate_averaging_constant<S: DyadicSource>(
    source: &S,
    alpha: f64,
    gamma: f64,
) -> AveragingEstimate {
    let n_max = source.truncation().n_max;
    let per_point = source.map_columns(&|p, _mult, col| {
        let w = (1.0 + p.freq.xi_norm()).powf(alpha) * (1.0 + p.freq.omega.abs().ln_1p().sqrt());
        let mut best: f64 = 0.0;
        for n in 0..=n_max {
            let first = (1usize << n) - 1;
            let len_pow = 2f64.powf(-(n as f64) * gamma);
            let m = col[first..2 * first + 1]
                .iter()
                .map(|y| y.norm())
                .fold(0.0, f64::max);
            best = best.max(m / (w * len_pow));
        }
        best
    });
    AveragingEstimate {
        k: per_point.into_iter().fold(0.0, f64::max),
        alpha,
        gamma,
        truncation: source.truncation(),
    }
}

/// The dyadic cell attaining the estimate; handy for diagnostics.
pub fn argmax_cell<S: DyadicSource>(
    source: &S,
    alpha: f64,
    gamma: f64,
) -> Option<(Frequency, u32, usize, f64)> {
    let found = source.map_columns(&|p, _m, col| {
        let w = (1.0 + p.freq.xi_norm()).powf(alpha) * (1.0 + p.freq.omega.abs().ln_1p().sqrt());
        col.iter()
            .enumerate()
            .map(|(cell, y)| {
                let (n, k) = cell_level(cell);
                (cell, n, k, y.norm() / (w * 2f64.powf(-(n as f64) * gamma)))
            })
            .fold(None, |acc: Option<(usize, u32, usize, f64)>, c| match acc {
                Some(a) if a.3 >= c.3 => Some(a),
                _ => Some(c),
            })
            .map(|(_, n, k, r)| (p.freq.clone(), n, k, r))
    });
    found.into_iter().flatten().fold(None, |acc, c| match acc {
        Some(a) if a.3 >= c.3 => Some(a),
        _ => Some(c),
    })
}

/// Increments `G_{s,t}(x) = (sigma_{[s,t]} b)(x)` of an atom field along a path,
/// with per-atom segment integrals precomputed once.
#[derive(Debug, Clone)]
pub struct AveragedIncrements {
    field: FourierVectorField,
    n_grid: usize,
    /// `segments[j * n_grid + k]`: `Y` of atom `j` on cell `k`.
    segments: Vec<Complex64>,
    /// Running sums of `segments` per atom, `n_grid + 1` entries each.
    prefix: Vec<Complex64>,
    exponents: FieldExponents,
}

impl AveragedIncrements {
    pub fn new(field: &FourierVectorField, path: &SampledPath) -> Result<Self> {
        if field.dim() != path.dim() {
            return domain("field and path dimensions differ");
        }
        let n = path.n_grid();
        let mut segments = Vec::with_capacity(field.len() * n);
        let mut prefix = Vec::with_capacity(field.len() * (n + 1));
        for atom in field.atoms() {
            let segs = segment_integrals_unchecked(path, &atom_frequency(atom), 0, n);
            let mut acc = Complex64::new(0.0, 0.0);
            prefix.push(acc);
            for s in &segs {
                acc += s;
                prefix.push(acc);
            }
            segments.extend(segs);
        }
        let lipschitz: f64 = field
            .atoms()
            .iter()
            .map(|a| a.coeff_norm() * a.xi_norm())
            .sum();
        Ok(Self {
            field: field.clone(),
            n_grid: n,
            segments,
            prefix,
            exponents: FieldExponents {
                nu: 1.0,
                vartheta: 1.0,
                norm_bound: lipschitz,
            },
        })
    }

    /// Replaces the declared regularity metadata.
    pub fn with_exponents(mut self, exponents: FieldExponents) -> Self {
        self.exponents = exponents;
        self
    }

    pub fn field(&self) -> &FourierVectorField {
        &self.field
    }

    #[inline]
    fn interval_y(&self, atom: usize, a: usize, b: usize) -> Complex64 {
        if b == a + 1 {
            self.segments[atom * self.n_grid + a]
        } else {
            let base = atom * (self.n_grid + 1);
            self.prefix[base + b] - self.prefix[base + a]
        }
    }

    /// Spatial Jacobian `D_x G_{a,b}(x)`, row-major `d x d`.
    pub fn jacobian(&self, a: usize, b: usize, x: &[f64], out: &mut [f64]) {
        let d = self.field.dim();
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, atom) in self.field.atoms().iter().enumerate() {
            let e = self.interval_y(j, a, b)
                * Complex64::new(0.0, 1.0)
                * Complex64::from_polar(1.0, dot(&atom.xi, x));
            for (r, c) in atom.c.iter().enumerate() {
                let z = c * e;
                for (col, xi) in atom.xi.iter().enumerate() {
                    out[r * d + col] += z.re * xi;
                }
            }
        }
    }
}

impl IncrementField for AveragedIncrements {
    fn dim_in(&self) -> usize {
        self.field.dim()
    }

    fn dim_out(&self) -> usize {
        self.field.dim()
    }

    fn n_grid(&self) -> usize {
        self.n_grid
    }

    fn increment(&self, a: usize, b: usize, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, atom) in self.field.atoms().iter().enumerate() {
            let e = self.interval_y(j, a, b) * Complex64::from_polar(1.0, dot(&atom.xi, x));
            for (i, c) in atom.c.iter().enumerate() {
                out[i] += (c * e).re;
            }
        }
    }

    fn exponents(&self) -> FieldExponents {
        self.exponents
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{build_dyadic_table, StreamingDyadic};
    use crate::field::Atom;

    fn path() -> SampledPath {
        SampledPath::from_fn(64, 1, |t| {
            vec![(7.0 * t).sin() + 0.5 * (23.0 * t).cos() - 0.5]
        })
        .unwrap()
    }

    fn field() -> FourierVectorField {
        FourierVectorField::with_conjugates(
            1,
            vec![
                Atom::new(1.0, vec![2.0], vec![Complex64::new(0.3, -0.1)]),
                Atom::new(0.0, vec![5.0], vec![Complex64::new(0.0, 0.2)]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn constant_field_averages_to_length_times_constant() {
        let f = FourierVectorField::constant(&[2.5]);
        let v = averaged_field(&f, &path(), 0.25, 0.75, &[3.0]).unwrap();
        assert_eq!(v.value, vec![1.25]);
        assert_eq!(v.imag_residual, 0.0);
    }

    #[test]
    fn translation_consistency() {
        let (f, p) = (field(), path());
        let x = [0.83];
        let a = averaged_field(&f, &p, 0.125, 0.875, &x).unwrap();
        let b = averaged_field(&f.translate(&x), &p, 0.125, 0.875, &[0.0]).unwrap();
        assert!((a.value[0] - b.value[0]).abs() < 1e-12);
    }

    #[test]
    fn increments_match_averaged_field() {
        let (f, p) = (field(), path());
        let g = AveragedIncrements::new(&f, &p).unwrap();
        let mut out = [0.0];
        g.increment(8, 40, &[0.4], &mut out);
        let direct = averaged_field(&f, &p, 0.125, 0.625, &[0.4]).unwrap();
        assert!((out[0] - direct.value[0]).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let f = FourierVectorField::with_conjugates(
            2,
            vec![Atom::new(
                0.5,
                vec![1.0, -2.0],
                vec![Complex64::new(0.3, 0.1), Complex64::new(0.0, 0.2)],
            )],
        )
        .unwrap();
        let p = SampledPath::from_fn(32, 2, |t| vec![t.sin(), t * t]).unwrap();
        let g = AveragedIncrements::new(&f, &p).unwrap();
        let x = [0.3, -0.2];
        let mut jac = [0.0; 4];
        g.jacobian(3, 20, &x, &mut jac);
        let h = 1e-6;
        for col in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[col] += h;
            xm[col] -= h;
            let (mut gp, mut gm) = ([0.0; 2], [0.0; 2]);
            g.increment(3, 20, &xp, &mut gp);
            g.increment(3, 20, &xm, &mut gm);
            for r in 0..2 {
                assert!(((gp[r] - gm[r]) / (2.0 * h) - jac[r * 2 + col]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn constant_estimate_for_degenerate_table() {
        let p = path();
        let t = build_dyadic_table(&p, Truncation::new(0, 0, 0.0, 0.0), 10).unwrap();
        assert_eq!(estimate_averaging_constant(&t, -0.5, 0.6).k, 1.0);
    }

    #[test]
    fn streaming_and_table_estimates_agree() {
        let p = path();
        let tr = Truncation::new(4, 1, 3.0, 3.0);
        let t = build_dyadic_table(&p, tr, 1 << 20).unwrap();
        let s = StreamingDyadic::new(&p, tr).unwrap();
        let a = estimate_averaging_constant(&t, -0.7, 0.55).k;
        let b = estimate_averaging_constant(&s, -0.7, 0.55).k;
        assert!((a - b).abs() <= 1e-12 * a);
        let (_, n, _, r) = argmax_cell(&t, -0.7, 0.55).unwrap();
        assert!(n <= 4);
        assert!((r - a).abs() <= 1e-12 * a);
    }

    #[test]
    fn estimate_grows_with_the_lattice() {
        let p = path();
        let small = build_dyadic_table(&p, Truncation::new(3, 0, 2.0, 2.0), 1 << 20).unwrap();
        let big = build_dyadic_table(&p, Truncation::new(5, 1, 4.0, 4.0), 1 << 20).unwrap();
        assert!(
            estimate_averaging_constant(&big, -0.5, 0.6).k
                >= estimate_averaging_constant(&small, -0.5, 0.6).k
        );
    }
}
