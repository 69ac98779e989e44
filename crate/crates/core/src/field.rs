//! Vector fields given as finite sums of Fourier atoms,
//! `b(t, x) = sum_j c_j exp(i (omega_j t + xi_j . x))`.

use std::collections::HashMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::path::{dot, euclid_norm};

/// Relative tolerance of the reality-closure check.
pub const CLOSURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub omega: f64,
    pub xi: Vec<f64>,
    pub c: Vec<Complex64>,
}

impl Atom {
    pub fn new(omega: f64, xi: Vec<f64>, c: Vec<Complex64>) -> Self {
        Self { omega, xi, c }
    }

    pub fn coeff_norm(&self) -> f64 {
        self.c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn xi_norm(&self) -> f64 {
        euclid_norm(&self.xi)
    }

    /// Weight `(1+|xi|)^alpha (1 + log^{1/2}(1+|omega|))` of the N_alpha norm.
    pub fn weight(&self, alpha: f64) -> f64 {
        (1.0 + self.xi_norm()).powf(alpha) * (1.0 + self.omega.abs().ln_1p().sqrt())
    }

    fn conjugate(&self) -> Atom {
        Atom {
            omega: -self.omega,
            xi: self.xi.iter().map(|v| -v).collect(),
            c: self.c.iter().map(|z| z.conj()).collect(),
        }
    }

    fn key(&self) -> Vec<u64> {
        std::iter::once(self.omega)
            .chain(self.xi.iter().copied())
            .map(|v| if v == 0.0 { 0u64 } else { v.to_bits() })
            .collect()
    }
}

/// A reality-closed finite atom sum. Duplicate `(omega, xi)` keys are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierVectorField {
    dim: usize,
    atoms: Vec<Atom>,
}

impl FourierVectorField {
    /// Validates dimensions and reality closure after merging duplicates.
    pub fn new(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        let f = Self::merged(dim, atoms)?;
        f.check_closure()?;
        Ok(f)
    }

    /// Adds the missing conjugate twin of every atom, then builds the field.
    /// Atoms at `(0, 0)` keep only their real part.
    pub fn with_conjugates(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        let mut all = Vec::with_capacity(2 * atoms.len());
        for a in atoms {
            if a.omega == 0.0 && a.xi.iter().all(|v| *v == 0.0) {
                let c = a.c.iter().map(|z| Complex64::new(z.re, 0.0)).collect();
                all.push(Atom { c, ..a });
            } else {
                let twin = a.conjugate();
                all.push(a);
                all.push(twin);
            }
        }
        Self::new(dim, all)
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            atoms: Vec::new(),
        }
    }

    /// Time-independent constant field `b = c`.
    pub fn constant(c: &[f64]) -> Self {
        let atom = Atom::new(
            0.0,
            vec![0.0; c.len()],
            c.iter().map(|v| Complex64::new(*v, 0.0)).collect(),
        );
        Self {
            dim: c.len(),
            atoms: vec![atom],
        }
    }

    fn merged(dim: usize, atoms: Vec<Atom>) -> Result<Self> {
        let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
        let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
        for a in atoms {
            if a.xi.len() != dim || a.c.len() != dim {
                return domain(format!("atom does not have dimension {dim}"));
            }
            if !a.omega.is_finite()
                || a.xi.iter().any(|v| !v.is_finite())
                || a.c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())
            {
                return domain("atom entries must be finite");
            }
            match seen.get(&a.key()) {
                Some(&i) => {
                    for (acc, z) in out[i].c.iter_mut().zip(&a.c) {
                        *acc += z;
                    }
                }
                None => {
                    seen.insert(a.key(), out.len());
                    out.push(a);
                }
            }
        }
        Ok(Self { dim, atoms: out })
    }

    fn check_closure(&self) -> Result<()> {
        let index: HashMap<Vec<u64>, usize> = self
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (a.key(), i))
            .collect();
        for a in &self.atoms {
            let twin = a.conjugate();
            let scale = a.coeff_norm().max(1.0);
            let Some(&j) = index.get(&twin.key()) else {
                if a.coeff_norm() == 0.0 {
                    continue;
                }
                return domain(format!(
                    "atom (omega = {}, xi = {:?}) has no conjugate twin",
                    a.omega, a.xi
                ));
            };
            let mismatch: f64 = self.atoms[j]
                .c
                .iter()
                .zip(&twin.c)
                .map(|(x, y)| (x - y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if mismatch > CLOSURE_TOL * scale {
                return domain(format!(
                    "coefficients at (omega = {}, xi = {:?}) are not conjugate to their twin",
                    a.omega, a.xi
                ));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `sum_j |c_j| (1+|xi_j|)^alpha (1 + log^{1/2}(1+|omega_j|))`.
    pub fn n_alpha_norm(&self, alpha: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.coeff_norm() * a.weight(alpha))
            .sum()
    }

    /// `sum_j |c_j|`.
    pub fn coefficient_mass(&self) -> f64 {
        self.atoms.iter().map(Atom::coeff_norm).sum()
    }

    pub fn max_xi_norm(&self) -> f64 {
        self.atoms.iter().map(Atom::xi_norm).fold(0.0, f64::max)
    }

    /// Real part of `b(t, x)` written to `out`; returns the norm of the
    /// imaginary part that was dropped.
    pub fn eval_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> f64 {
        let mut im = vec![0.0; self.dim];
        out.iter_mut().for_each(|v| *v = 0.0);
        for a in &self.atoms {
            let e = Complex64::from_polar(1.0, a.omega * t + dot(&a.xi, x));
            for (i, c) in a.c.iter().enumerate() {
                let z = c * e;
                out[i] += z.re;
                im[i] += z.im;
            }
        }
        euclid_norm(&im)
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, x, &mut out);
        out
    }

    /// `tau_x f (z) = f(x + z)`: coefficients pick up `exp(i xi . x)`.
    pub fn translate(&self, x: &[f64]) -> FourierVectorField {
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                let e = Complex64::from_polar(1.0, dot(&a.xi, x));
                Atom {
                    c: a.c.iter().map(|z| z * e).collect(),
                    ..a.clone()
                }
            })
            .collect();
        Self {
            dim: self.dim,
            atoms,
        }
    }

    /// Multiplies each coefficient by a real factor depending on the atom.
    pub fn map_coefficients<F: Fn(&Atom) -> f64>(&self, factor: F) -> FourierVectorField {
        let atoms = self
            .atoms
            .iter()
            .map(|a| {
                let s = factor(a);
                Atom {
                    c: a.c.iter().map(|z| z * s).collect(),
                    ..a.clone()
                }
            })
            .collect();
        Self {
            dim: self.dim,
            atoms,
        }
    }

    /// `sum_k weight_k f_k`, merging atoms with equal keys.
    pub fn linear_combination(terms: &[(f64, &FourierVectorField)]) -> Result<FourierVectorField> {
        let dim = match terms.first() {
            Some((_, f)) => f.dim,
            None => return domain("empty linear combination"),
        };
        if terms.iter().any(|(_, f)| f.dim != dim) {
            return domain("fields have different dimensions");
        }
        let atoms = terms
            .iter()
            .flat_map(|(w, f)| {
                f.atoms.iter().map(move |a| Atom {
                    c: a.c.iter().map(|z| z * *w).collect(),
                    ..a.clone()
                })
            })
            .collect();
        Self::merged(dim, atoms)
    }

    pub fn sub(&self, other: &FourierVectorField) -> Result<FourierVectorField> {
        Self::linear_combination(&[(1.0, self), (-1.0, other)])
    }

    pub fn add(&self, other: &FourierVectorField) -> Result<FourierVectorField> {
        Self::linear_combination(&[(1.0, self), (1.0, other)])
    }

    /// `N_alpha(tau_x1 f - tau_y1 f - tau_x2 f + tau_y2 f)`.
    pub fn four_point_norm(
        &self,
        x1: &[f64],
        y1: &[f64],
        x2: &[f64],
        y2: &[f64],
        alpha: f64,
    ) -> f64 {
        self.atoms
            .iter()
            .map(|a| {
                let e = |p: &[f64]| Complex64::from_polar(1.0, dot(&a.xi, p));
                let m = e(x1) - e(y1) - e(x2) + e(y2);
                a.coeff_norm() * m.norm() * a.weight(alpha)
            })
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        let recs: Vec<AtomRecord> = self.atoms.iter().map(AtomRecord::from).collect();
        Ok(serde_json::to_string_pretty(&recs)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let recs: Vec<AtomRecord> = serde_json::from_str(text)?;
        let dim = match recs.first() {
            Some(r) => r.xi.len(),
            None => return Err(Error::Parse("field file has no atoms".into())),
        };
        let atoms = recs
            .into_iter()
            .map(Atom::try_from)
            .collect::<Result<Vec<_>>>()?;
        Self::new(dim, atoms)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// JSON shape of one atom.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtomRecord {
    pub omega: f64,
    pub xi: Vec<f64>,
    pub c_re: Vec<f64>,
    pub c_im: Vec<f64>,
}

impl From<&Atom> for AtomRecord {
    fn from(a: &Atom) -> Self {
        Self {
            omega: a.omega,
            xi: a.xi.clone(),
            c_re: a.c.iter().map(|z| z.re).collect(),
            c_im: a.c.iter().map(|z| z.im).collect(),
        }
    }
}

impl TryFrom<AtomRecord> for Atom {
    type Error = Error;

    fn try_from(r: AtomRecord) -> Result<Atom> {
        if r.c_re.len() != r.xi.len() || r.c_im.len() != r.xi.len() {
            return Err(Error::Parse(
                "c_re, c_im and xi must have equal length".into(),
            ));
        }
        let c = r
            .c_re
            .iter()
            .zip(&r.c_im)
            .map(|(a, b)| Complex64::new(*a, *b))
            .collect();
        Ok(Atom::new(r.omega, r.xi, c))
    }
}
