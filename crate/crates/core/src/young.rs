//! Nonlinear Young integrals `int_s^t G_{du}(theta_u)` as limits of dyadic
//! left-point Riemann sums, with sewing diagnostics and Hölder norms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::path::{euclid_dist, euclid_norm, SampledPath};

/// Declared regularity of an increment field: `nu`-Hölder in time with values
/// in `vartheta`-Hölder maps, with `norm_bound` an estimate of `||G||_nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldExponents {
    pub nu: f64,
    pub vartheta: f64,
    pub norm_bound: f64,
}

impl FieldExponents {
    /// `nu + vartheta * rho`.
    pub fn young_sum(&self, rho: f64) -> f64 {
        self.nu + self.vartheta * rho
    }
}

/// A field of increments `G_{s,t}(x) = G_t(x) - G_s(x)` on a dyadic grid.
/// Times are grid indices.
pub trait IncrementField: Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn n_grid(&self) -> usize;
    fn increment(&self, a: usize, b: usize, x: &[f64], out: &mut [f64]);
    fn exponents(&self) -> FieldExponents;
}

type Potential = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// Increments of an explicit potential `G_t(x)`.
pub struct PotentialField {
    n_grid: usize,
    dim_in: usize,
    dim_out: usize,
    potential: Box<Potential>,
    exponents: FieldExponents,
}

impl PotentialField {
    pub fn new<F>(
        n_grid: usize,
        dim_in: usize,
        dim_out: usize,
        exponents: FieldExponents,
        potential: F,
    ) -> Self
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            n_grid,
            dim_in,
            dim_out,
            potential: Box::new(potential),
            exponents,
        }
    }
}

impl IncrementField for PotentialField {
    fn dim_in(&self) -> usize {
        self.dim_in
    }

    fn dim_out(&self) -> usize {
        self.dim_out
    }

    fn n_grid(&self) -> usize {
        self.n_grid
    }

    fn increment(&self, a: usize, b: usize, x: &[f64], out: &mut [f64]) {
        let n = self.n_grid as f64;
        let mut gs = vec![0.0; self.dim_out];
        (self.potential)(b as f64 / n, x, out);
        (self.potential)(a as f64 / n, x, &mut gs);
        for (o, g) in out.iter_mut().zip(&gs) {
            *o -= g;
        }
    }

    fn exponents(&self) -> FieldExponents {
        self.exponents
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YoungResult {
    pub value: Vec<f64>,
    /// A-posteriori bound on `|value - G_{s,t}(theta_s)|`, including the
    /// geometric tail beyond the finest level.
    pub sewing_bound: f64,
    pub refinement_levels: u32,
    /// Riemann sums at levels `0..=refinement_levels`.
    pub level_sums: Vec<Vec<f64>>,
    /// `|J_{l+1} - J_l|` for consecutive levels.
    pub level_defects: Vec<f64>,
    pub tail_estimate: f64,
}

impl YoungResult {
    /// Riemann sums at the last three levels.
    pub fn convergence_report(&self) -> &[Vec<f64>] {
        let n = self.level_sums.len();
        &self.level_sums[n.saturating_sub(3)..]
    }
}

/// `2^-(nu + vartheta rho - 1) / (1 - 2^-(nu + vartheta rho - 1))`.
pub fn sewing_constant(young_sum: f64) -> f64 {
    let r = 2f64.powf(-(young_sum - 1.0));
    r / (1.0 - r)
}

fn check_inputs<G: IncrementField + ?Sized>(
    g: &G,
    theta: &SampledPath,
    s: f64,
    t: f64,
) -> Result<(usize, usize)> {
    if g.n_grid() != theta.n_grid() {
        return domain(format!(
            "field grid {} and path grid {} differ",
            g.n_grid(),
            theta.n_grid()
        ));
    }
    if g.dim_in() != theta.dim() {
        return domain("path dimension does not match the field input dimension");
    }
    theta.interval(s, t)
}

fn check_exponents(e: &FieldExponents, rho: f64) -> Result<()> {
    let sum = e.young_sum(rho);
    if !(sum > 1.0) {
        return Err(Error::Exponent { sum });
    }
    Ok(())
}

/// Grid indices of the level-`level` partition of `[a, b]`: the endpoints plus
/// every multiple of `n_grid / 2^level` strictly inside.
pub fn dyadic_partition(n_grid: usize, a: usize, b: usize, level: u32) -> Vec<usize> {
    let stride = (n_grid >> level).max(1);
    let mut pts = vec![a];
    let mut p = (a / stride + 1) * stride;
    while p < b {
        pts.push(p);
        p += stride;
    }
    pts.push(b);
    pts
}

fn riemann_sum<G: IncrementField + ?Sized>(g: &G, theta: &SampledPath, pts: &[usize]) -> Vec<f64> {
    let m = g.dim_out();
    let terms: Vec<Vec<f64>> = pts
        .par_windows(2)
        .map(|w| {
            let mut out = vec![0.0; m];
            g.increment(w[0], w[1], theta.value(w[0]), &mut out);
            out
        })
        .collect();
    tree_reduce(&terms, m)
}

fn tree_reduce(terms: &[Vec<f64>], m: usize) -> Vec<f64> {
    match terms.len() {
        0 => vec![0.0; m],
        1 => terms[0].clone(),
        n => {
            let (l, r) = terms.split_at(n / 2);
            let mut a = tree_reduce(l, m);
            let b = tree_reduce(r, m);
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        }
    }
}

/// Dyadic Riemann sum at depth `n_levels` with sewing diagnostics.
/// `rho` is the declared Hölder exponent of `theta`.
pub fn young_integral<G: IncrementField + ?Sized>(
    g: &G,
    theta: &SampledPath,
    s: f64,
    t: f64,
    n_levels: u32,
    rho: f64,
) -> Result<YoungResult> {
    let (a, b) = check_inputs(g, theta, s, t)?;
    let ex = g.exponents();
    check_exponents(&ex, rho)?;
    if n_levels > theta.depth() {
        return domain(format!(
            "n_levels = {n_levels} exceeds the grid depth {}",
            theta.depth()
        ));
    }
    let level_sums: Vec<Vec<f64>> = (0..=n_levels)
        .map(|l| riemann_sum(g, theta, &dyadic_partition(theta.n_grid(), a, b, l)))
        .collect();
    let level_defects: Vec<f64> = level_sums
        .windows(2)
        .map(|w| euclid_dist(&w[0], &w[1]))
        .collect();
    let tail_estimate =
        level_defects.last().copied().unwrap_or(0.0) * sewing_constant(ex.young_sum(rho));
    Ok(YoungResult {
        value: level_sums.last().cloned().expect("at least one level"),
        sewing_bound: level_defects.iter().sum::<f64>() + tail_estimate,
        refinement_levels: n_levels,
        level_sums,
        level_defects,
        tail_estimate,
    })
}

/// Running left-point sums on the full grid from index `a` to `b`:
/// entry `k` is `sum_{i < a + k} G_{i,i+1}(theta_i)`.
pub fn riemann_partial_sums<G: IncrementField + ?Sized>(
    g: &G,
    theta_values: &[f64],
    a: usize,
    b: usize,
) -> Vec<Vec<f64>> {
    let d_in = g.dim_in();
    let m = g.dim_out();
    let incs: Vec<Vec<f64>> = (a..b)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; m];
            g.increment(i, i + 1, &theta_values[i * d_in..(i + 1) * d_in], &mut out);
            out
        })
        .collect();
    let mut acc = vec![0.0; m];
    let mut sums = Vec::with_capacity(b - a + 1);
    sums.push(acc.clone());
    for inc in incs {
        acc.iter_mut().zip(&inc).for_each(|(x, y)| *x += y);
        sums.push(acc.clone());
    }
    sums
}

/// `|I(s,t) - I(s,u) - I(u,t)|` with the outer integral at `n_outer` levels
/// and the two halves at `n_inner` levels.
pub fn chasles_defect_mixed<G: IncrementField + ?Sized>(
    g: &G,
    theta: &SampledPath,
    (s, u, t): (f64, f64, f64),
    n_outer: u32,
    n_inner: u32,
    rho: f64,
) -> Result<(f64, f64)> {
    if !(s < u && u < t) {
        return domain("need s < u < t");
    }
    let whole = young_integral(g, theta, s, t, n_outer, rho)?;
    let left = young_integral(g, theta, s, u, n_inner, rho)?;
    let right = young_integral(g, theta, u, t, n_inner, rho)?;
    let defect: f64 = whole
        .value
        .iter()
        .zip(&left.value)
        .zip(&right.value)
        .map(|((w, l), r)| (w - l - r).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((
        defect,
        whole.sewing_bound + left.sewing_bound + right.sewing_bound,
    ))
}

/// Chasles defect at matched nested partitions.
pub fn chasles_defect<G: IncrementField + ?Sized>(
    g: &G,
    theta: &SampledPath,
    s: f64,
    u: f64,
    t: f64,
    n_levels: u32,
    rho: f64,
) -> Result<f64> {
    Ok(chasles_defect_mixed(g, theta, (s, u, t), n_levels, n_levels, rho)?.0)
}

/// Hölder seminorm over the pairs `(u, u + 2^l h)` inside `[s, t]`.
pub fn holder_norm(path: &SampledPath, gamma: f64, s: f64, t: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return domain(format!("Hölder exponent {gamma} outside (0, 1]"));
    }
    let (a, b) = path.interval(s, t)?;
    Ok(holder_norm_indices(path, gamma, a, b))
}

pub(crate) fn holder_norm_indices(path: &SampledPath, gamma: f64, a: usize, b: usize) -> f64 {
    let h = path.step();
    let mut best: f64 = 0.0;
    let mut span = 1usize;
    while span <= b - a {
        let denom = (span as f64 * h).powf(gamma);
        for u in a..=b - span {
            best = best.max(euclid_dist(path.value(u), path.value(u + span)) / denom);
        }
        span *= 2;
    }
    best
}

/// Sup norm of a path over `[s, t]`.
pub fn sup_norm(path: &SampledPath, s: f64, t: f64) -> Result<f64> {
    let (a, b) = path.interval(s, t)?;
    Ok((a..=b)
        .map(|k| euclid_norm(path.value(k)))
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub difference: f64,
    /// The modulus with unit constant.
    pub unit_modulus: f64,
    /// `constant * unit_modulus`.
    pub bound: f64,
    /// `difference / unit_modulus`, compared against the calibrated constant.
    pub ratio: f64,
}

/// `|I(theta1) - I(theta2)|` against
/// `C ||G|| ||theta1 - theta2||_inf^((nu + vartheta rho - 1)/rho) (t - s) (||theta1||_rho^vartheta + ||theta2||_rho^vartheta)^((1 - nu)/(vartheta rho))`.
#[allow(clippy::too_many_arguments)]
pub fn continuity_modulus<G: IncrementField + ?Sized>(
    g: &G,
    theta1: &SampledPath,
    theta2: &SampledPath,
    s: f64,
    t: f64,
    n_levels: u32,
    rho: f64,
    constant: f64,
) -> Result<ContinuityReport> {
    let i1 = young_integral(g, theta1, s, t, n_levels, rho)?;
    let i2 = young_integral(g, theta2, s, t, n_levels, rho)?;
    let difference = euclid_dist(&i1.value, &i2.value);
    let ex = g.exponents();
    let (a, b) = theta1.interval(s, t)?;
    let diff_sup = (a..=b)
        .map(|k| euclid_dist(theta1.value(k), theta2.value(k)))
        .fold(0.0, f64::max);
    let h1 = holder_norm_indices(theta1, rho, a, b);
    let h2 = holder_norm_indices(theta2, rho, a, b);
    let vr = ex.vartheta * rho;
    let unit_modulus = ex.norm_bound
        * diff_sup.powf((ex.nu + vr - 1.0) / rho)
        * (t - s)
        * (h1.powf(ex.vartheta) + h2.powf(ex.vartheta)).powf((1.0 - ex.nu) / vr);
    let ratio = if difference == 0.0 {
        0.0
    } else {
        difference / unit_modulus
    };
    Ok(ContinuityReport {
        difference,
        unit_modulus,
        bound: constant * unit_modulus,
        ratio,
    })
}
