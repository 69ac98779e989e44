//! Path statistics `R`, `S`, `Q` and Monte-Carlo checks of the moment bounds
//! for oscillatory integrals of fractional Brownian motion.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{DyadicSource, StreamingDyadic, Truncation};
use crate::error::{domain, Result};
use crate::fbm::{ensemble_seed, sample_ensemble, HurstParams};
use crate::oscillatory::{eval_y, Frequency};
use crate::path::{fmt_f64, SampledPath};
use crate::quadrature::{tree_sum, LogSumExp, GL4_NODES, GL4_WEIGHTS};

/// Number of batches used for Monte-Carlo standard errors.
pub const MC_BATCHES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub lambda: f64,
    pub r: f64,
    pub s: f64,
    pub q: f64,
    pub log_r: f64,
    pub log_s: f64,
    pub truncation: Truncation,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return domain(format!("lambda = {lambda} outside (0, 1]"));
    }
    Ok(())
}

/// `log R = (1/lambda) log int_0^1 exp(lambda |w_u|^2) du`, Gauss–Legendre per segment.
pub fn log_r_lambda(path: &SampledPath, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let d = path.dim();
    let h = path.step();
    let mut exponents = Vec::with_capacity(4 * path.n_grid());
    let mut weights = Vec::with_capacity(4 * path.n_grid());
    for k in 0..path.n_grid() {
        let (a, b) = (path.value(k), path.value(k + 1));
        for (x, w) in GL4_NODES.iter().zip(GL4_WEIGHTS.iter()) {
            let theta = 0.5 * (1.0 + x);
            let sq: f64 = (0..d).map(|c| (a[c] + theta * (b[c] - a[c])).powi(2)).sum();
            exponents.push(lambda * sq);
            weights.push(0.5 * w * h);
        }
    }
    let top = exponents.iter().copied().fold(0.0, f64::max);
    let log_int = if top < 500.0 {
        // 1 + int (e^x - 1) keeps w = 0 exact
        let excess: Vec<f64> = exponents
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * x.exp_m1())
            .collect();
        tree_sum(&excess).ln_1p()
    } else {
        let mut acc = LogSumExp::default();
        for (x, w) in exponents.iter().zip(&weights) {
            acc.push(w.ln() + x);
        }
        acc.value()
    };
    // the integrand is >= 1, so clamp rounding below zero
    Ok((log_int / lambda).max(0.0))
}

pub fn r_lambda(path: &SampledPath, lambda: f64) -> Result<f64> {
    Ok(log_r_lambda(path, lambda)?.exp())
}

fn check_hurst(hurst: f64) -> Result<()> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return domain(format!("Hurst exponent {hurst} outside (0, 1)"));
    }
    Ok(())
}

/// Log-weight of lattice point `p` summed over every lattice `(Z/2^m)^{d+1}`, `m <= m_max`, containing it.
fn lattice_log_weight(coarsest: u32, m_max: u32, omega: f64, xi_norm: f64, dim: usize) -> f64 {
    let levels: f64 = (coarsest..=m_max).map(|m| 2f64.powi(-(m as i32))).sum();
    levels.ln() - 2.0 * (omega.abs() + 1.0).ln() - (dim as f64 + 1.0) * (xi_norm + 1.0).ln()
}

fn point_s_terms(
    p: &crate::dyadic::LatticePoint,
    mult: f64,
    col: &[num_complex::Complex64],
    tr: &Truncation,
    dim: usize,
    lambda: f64,
    hurst: f64,
) -> LogSumExp {
    let base = lattice_log_weight(
        p.coarsest_level,
        tr.m_max,
        p.freq.omega,
        p.freq.xi_norm(),
        dim,
    ) + mult.ln();
    let amp = (1.0 + p.freq.xi_norm()).powf(1.0 / hurst);
    let mut acc = LogSumExp::default();
    for n in 0..=tr.n_max {
        let first = (1usize << n) - 1;
        let level = base - 2.0 * n as f64 * std::f64::consts::LN_2;
        let scale = lambda * 2f64.powi(n as i32) * amp;
        for y in &col[first..2 * first + 1] {
            acc.push(level + scale * y.norm_sqr());
        }
    }
    acc
}

/// `log S` on the truncated lattice of `source`.
pub fn log_s_lambda<S: DyadicSource>(source: &S, lambda: f64, hurst: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_hurst(hurst)?;
    let tr = source.truncation();
    let dim = source.dim();
    let parts =
        source.map_columns(&|p, mult, col| point_s_terms(p, mult, col, &tr, dim, lambda, hurst));
    let mut acc = LogSumExp::default();
    for part in &parts {
        acc.merge(part);
    }
    Ok(acc.value() / lambda)
}

pub fn s_lambda<S: DyadicSource>(source: &S, lambda: f64, hurst: f64) -> Result<f64> {
    Ok(log_s_lambda(source, lambda, hurst)?.exp())
}

/// `sqrt(max(log S, 0)) + sqrt(log R)`.
pub fn q_lambda(r: f64, s: f64) -> f64 {
    q_from_logs(r.ln(), s.ln())
}

pub fn q_from_logs(log_r: f64, log_s: f64) -> f64 {
    log_s.max(0.0).sqrt() + log_r.max(0.0).sqrt()
}

pub fn path_stats<S: DyadicSource>(
    path: &SampledPath,
    source: &S,
    lambda: f64,
    hurst: f64,
) -> Result<PathStats> {
    let log_r = log_r_lambda(path, lambda)?;
    let log_s = log_s_lambda(source, lambda, hurst)?;
    Ok(PathStats {
        lambda,
        r: log_r.exp(),
        s: log_s.exp(),
        q: q_from_logs(log_r, log_s),
        log_r,
        log_s,
        truncation: source.truncation(),
    })
}

/// Monte-Carlo mean with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Samples are split into [`MC_BATCHES`] contiguous batches in index order.
    pub fn from_samples(samples: &[f64], seed: u64) -> Result<Self> {
        let n = samples.len();
        if n < MC_BATCHES {
            return domain(format!("need at least {MC_BATCHES} samples, got {n}"));
        }
        let mean = tree_sum(samples) / n as f64;
        let batch_means: Vec<f64> = (0..MC_BATCHES)
            .map(|b| {
                let chunk = &samples[b * n / MC_BATCHES..(b + 1) * n / MC_BATCHES];
                tree_sum(chunk) / chunk.len() as f64
            })
            .collect();
        let bm = batch_means.iter().sum::<f64>() / MC_BATCHES as f64;
        let var =
            batch_means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (MC_BATCHES - 1) as f64;
        Ok(Self {
            mean,
            se: (var / MC_BATCHES as f64).sqrt(),
            n,
            seed,
        })
    }

    /// `|a - b| / sqrt(se_a^2 + se_b^2)`.
    pub fn joint_z(&self, other: &McEstimate) -> f64 {
        let se = self.se.hypot(other.se);
        if se == 0.0 {
            if self.mean == other.mean {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - other.mean).abs() / se
        }
    }
}

/// Setup shared by the oscillatory moment checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSetup {
    pub hurst: f64,
    pub dim: usize,
    pub omega: f64,
    pub xi: Vec<f64>,
    pub s: f64,
    pub t: f64,
    /// Grid depth of the sampled paths.
    pub depth: u32,
    pub seed: u64,
}

impl MomentSetup {
    pub fn validate(&self) -> Result<()> {
        check_hurst(self.hurst)?;
        if self.xi.len() != self.dim {
            return domain("xi must have one entry per dimension");
        }
        if !(0.0 <= self.s && self.s < self.t && self.t <= 1.0) {
            return domain(format!(
                "need 0 <= s < t <= 1, got [{}, {}]",
                self.s, self.t
            ));
        }
        Ok(())
    }

    fn frequency(&self) -> Result<Frequency> {
        Frequency::new(self.omega, self.xi.clone())
    }

    fn params(&self) -> Result<HurstParams> {
        HurstParams::new(self.hurst, self.dim, self.depth, self.seed)
    }
}

/// `E|Y_{[0,t]}|^2` for Brownian motion at `omega = 0`: `2(k t - 1 + e^{-k t}) / k^2`, `k = |xi|^2 / 2`.
pub fn brownian_second_moment(xi_norm: f64, length: f64) -> f64 {
    let kappa = 0.5 * xi_norm * xi_norm;
    let x = kappa * length;
    if x < 1e-4 {
        // series of 2(x - 1 + e^{-x}) / x^2 times length^2
        return length * length * (1.0 - x / 3.0 + x * x / 12.0);
    }
    2.0 * (x - 1.0 + (-x).exp()) / (kappa * kappa)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub setup: MomentSetup,
    pub p: u32,
    pub estimate: McEstimate,
    /// Closed form, available for `H = 1/2`, `p = 1`, `omega = 0`.
    pub exact: Option<f64>,
    /// `|estimate - exact| / se`.
    pub z_score: Option<f64>,
    /// `(t - s)^{2p}`, the pathwise bound.
    pub pathwise_bound: f64,
    /// `(2p)!/p! ((t-s) / |xi|^{1/H})^p`, the bound shape without its constant.
    pub bound_shape: f64,
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn y_samples(paths: &[SampledPath], s: f64, t: f64, freq: &Frequency) -> Result<Vec<f64>> {
    paths
        .par_iter()
        .map(|p| Ok(eval_y(p, s, t, freq)?.value.norm_sqr()))
        .collect()
}

/// Monte-Carlo `E|Y_{[s,t]}(omega, xi)|^{2p}` over `n_samples` fBm paths.
pub fn moment_check(setup: &MomentSetup, p: u32, n_samples: usize) -> Result<MomentReport> {
    setup.validate()?;
    if p == 0 {
        return domain("p must be at least 1");
    }
    let freq = setup.frequency()?;
    let xi_norm = freq.xi_norm();
    if xi_norm == 0.0 {
        return domain("xi must be nonzero");
    }
    let paths = sample_ensemble(&setup.params()?, 0, n_samples)?;
    let samples: Vec<f64> = y_samples(&paths, setup.s, setup.t, &freq)?
        .into_iter()
        .map(|y2| y2.powi(p as i32))
        .collect();
    let estimate = McEstimate::from_samples(&samples, setup.seed)?;
    let len = setup.t - setup.s;
    let exact = (setup.hurst == 0.5 && p == 1 && setup.omega == 0.0)
        .then(|| brownian_second_moment(xi_norm, len));
    Ok(MomentReport {
        z_score: exact.map(|e| (estimate.mean - e).abs() / estimate.se),
        exact,
        pathwise_bound: len.powi(2 * p as i32),
        bound_shape: factorial(2 * p) / factorial(p)
            * (len / xi_norm.powf(1.0 / setup.hurst)).powi(p as i32),
        estimate,
        p,
        setup: setup.clone(),
    })
}

/// One interval/frequency pair of a scaling study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub s: f64,
    pub t: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub point: ScalingPoint,
    /// `(t - s) / |xi|^{1/H}`.
    pub scale: f64,
    pub estimate: McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub hurst: f64,
    pub slope: f64,
    pub intercept: f64,
    pub rows: Vec<ScalingRow>,
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// `E|Y|^2` at every point of the study on one shared one-dimensional
/// ensemble, with the log-log slope against `(t - s) / |xi|^{1/H}`.
pub fn moment_scaling(
    hurst: f64,
    depth: u32,
    points: &[ScalingPoint],
    n_samples: usize,
    seed: u64,
) -> Result<ScalingReport> {
    if points.len() < 2 {
        return domain("need at least two scaling points");
    }
    let paths = sample_ensemble(&HurstParams::new(hurst, 1, depth, seed)?, 0, n_samples)?;
    let rows = points
        .iter()
        .map(|pt| {
            if pt.xi == 0.0 {
                return domain("scaling points need xi != 0");
            }
            let freq = Frequency::new(0.0, vec![pt.xi])?;
            let samples = y_samples(&paths, pt.s, pt.t, &freq)?;
            Ok(ScalingRow {
                point: *pt,
                scale: (pt.t - pt.s) / pt.xi.abs().powf(1.0 / hurst),
                estimate: McEstimate::from_samples(&samples, seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = rows.iter().map(|r| r.scale.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.estimate.mean.ln()).collect();
    let (slope, intercept) = linear_fit(&lx, &ly);
    Ok(ScalingReport {
        hurst,
        slope,
        intercept,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentReport {
    pub setup: MomentSetup,
    pub lambda: f64,
    /// One estimate per requested sample count, drawn from disjoint path ranges.
    pub estimates: Vec<McEstimate>,
    /// Joint z-scores between consecutive estimates.
    pub stability: Vec<f64>,
    pub min_sample: f64,
}

/// Monte-Carlo `E exp(lambda |xi|^{1/H} |Y|^2 / (t - s))` at increasing sample counts.
pub fn exp_moment_check(
    setup: &MomentSetup,
    lambda: f64,
    n_samples_list: &[usize],
) -> Result<ExpMomentReport> {
    setup.validate()?;
    if !(lambda > 0.0 && lambda < 0.25) {
        return domain(format!("lambda = {lambda} outside (0, 1/4)"));
    }
    if n_samples_list.is_empty() {
        return domain("no sample counts given");
    }
    let freq = setup.frequency()?;
    let scale = lambda * freq.xi_norm().powf(1.0 / setup.hurst) / (setup.t - setup.s);
    let params = setup.params()?;
    let mut offset = 0;
    let mut estimates = Vec::new();
    let mut min_sample = f64::INFINITY;
    for &n in n_samples_list {
        let paths = sample_ensemble(&params, offset, n)?;
        let samples: Vec<f64> = y_samples(&paths, setup.s, setup.t, &freq)?
            .into_iter()
            .map(|y2| (scale * y2).exp())
            .collect();
        min_sample = samples.iter().copied().fold(min_sample, f64::min);
        let mut est = McEstimate::from_samples(&samples, setup.seed)?;
        est.seed = ensemble_seed(setup.seed, offset);
        estimates.push(est);
        offset += n;
    }
    let stability = estimates.windows(2).map(|w| w[0].joint_z(&w[1])).collect();
    Ok(ExpMomentReport {
        setup: setup.clone(),
        lambda,
        estimates,
        stability,
        min_sample,
    })
}

/// Per-path record of the K-vs-Q study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path_id: usize,
    pub seed: u64,
    pub k: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub lambda: f64,
    pub training: bool,
}

/// `K` and `S` in a single pass over the columns of `source`.
pub fn k_and_log_s<S: DyadicSource>(
    source: &S,
    alpha: f64,
    gamma: f64,
    lambda: f64,
    hurst: f64,
) -> Result<(f64, f64)> {
    check_lambda(lambda)?;
    check_hurst(hurst)?;
    let tr = source.truncation();
    let dim = source.dim();
    let parts = source.map_columns(&|p, mult, col| {
        let w = (1.0 + p.freq.xi_norm()).powf(alpha) * (1.0 + p.freq.omega.abs().ln_1p().sqrt());
        let mut k: f64 = 0.0;
        for n in 0..=tr.n_max {
            let first = (1usize << n) - 1;
            let m = col[first..2 * first + 1]
                .iter()
                .map(|y| y.norm())
                .fold(0.0, f64::max);
            k = k.max(m / (w * 2f64.powf(-(n as f64) * gamma)));
        }
        (k, point_s_terms(p, mult, col, &tr, dim, lambda, hurst))
    });
    let mut acc = LogSumExp::default();
    let mut k: f64 = 0.0;
    for (pk, part) in &parts {
        k = k.max(*pk);
        acc.merge(part);
    }
    Ok((k, acc.value() / lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KvsQConfig {
    pub hurst: f64,
    pub alpha: f64,
    /// Defaults to `5/8 + H alpha / 4`.
    pub gamma: Option<f64>,
    pub lambda: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub depth: u32,
    pub truncation: Truncation,
    /// Multiplier applied to the largest training ratio to obtain `C`.
    pub calibration_margin: f64,
    pub seed: u64,
}

impl KvsQConfig {
    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(0.625 + self.hurst * self.alpha / 4.0)
    }

    pub fn validate(&self) -> Result<()> {
        check_hurst(self.hurst)?;
        check_lambda(self.lambda)?;
        if !(self.alpha > -1.0 / (2.0 * self.hurst)) {
            return domain(format!("alpha = {} must exceed -1/(2H)", self.alpha));
        }
        if self.n_train == 0 {
            return domain("need at least one training path");
        }
        if !(self.calibration_margin >= 1.0) {
            return domain("calibration_margin must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KvsQReport {
    pub config: KvsQConfig,
    pub gamma: f64,
    /// Fitted constant in `K <= C (1 + Q)`.
    pub c: f64,
    pub max_training_ratio: f64,
    pub violations: usize,
    pub violation_fraction: f64,
    pub records: Vec<PathRecord>,
}

impl KvsQReport {
    pub fn write_csv<W: Write>(&self, mut out: W, preamble: &[String]) -> Result<()> {
        for line in preamble {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "path_id,K,Q,R,S,lambda,seed,training")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.path_id,
                fmt_f64(r.k),
                fmt_f64(r.q),
                fmt_f64(r.r),
                fmt_f64(r.s),
                fmt_f64(r.lambda),
                r.seed,
                r.training
            )?;
        }
        Ok(())
    }
}

/// Statistics of given paths; the first `n_train` are used for calibration.
pub fn k_vs_q_on_paths(paths: &[SampledPath], cfg: &KvsQConfig) -> Result<KvsQReport> {
    cfg.validate()?;
    if paths.len() < cfg.n_train {
        return domain("fewer paths than training paths");
    }
    let gamma = cfg.gamma();
    let records = paths
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let src = StreamingDyadic::new(p, cfg.truncation)?;
            let (k, log_s) = k_and_log_s(&src, cfg.alpha, gamma, cfg.lambda, cfg.hurst)?;
            let log_r = log_r_lambda(p, cfg.lambda)?;
            Ok(PathRecord {
                path_id: i,
                seed: ensemble_seed(cfg.seed, i),
                k,
                q: q_from_logs(log_r, log_s),
                r: log_r.exp(),
                s: log_s.exp(),
                lambda: cfg.lambda,
                training: i < cfg.n_train,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ratio = |r: &PathRecord| r.k / (1.0 + r.q);
    let max_training_ratio = records
        .iter()
        .filter(|r| r.training)
        .map(ratio)
        .fold(0.0, f64::max);
    let c = max_training_ratio * cfg.calibration_margin;
    let held_out: Vec<&PathRecord> = records.iter().filter(|r| !r.training).collect();
    let violations = held_out.iter().filter(|r| r.k > c * (1.0 + r.q)).count();
    Ok(KvsQReport {
        config: *cfg,
        gamma,
        c,
        max_training_ratio,
        violations,
        violation_fraction: if held_out.is_empty() {
            0.0
        } else {
            violations as f64 / held_out.len() as f64
        },
        records,
    })
}

/// Samples `n_train + n_test` paths and runs [`k_vs_q_on_paths`].
pub fn k_vs_q_regression(cfg: &KvsQConfig) -> Result<KvsQReport> {
    cfg.validate()?;
    let params = HurstParams::new(cfg.hurst, 1, cfg.depth, cfg.seed)?;
    let paths = sample_ensemble(&params, 0, cfg.n_train + cfg.n_test)?;
    k_vs_q_on_paths(&paths, cfg)
}
