//! Exact sampling of fractional Brownian motion on dyadic grids.
//!
//! Each scalar component is drawn independently by multiplying a vector of
//! standard normals with the Cholesky factor of the increment covariance.
//! Factors are cached per `(H, n_grid)`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

use crate::error::{domain, Error, Result};
use crate::path::SampledPath;

/// Largest grid for which a dense factor is built (the matrix has `n_grid^2` entries).
pub const MAX_DENSE_GRID: usize = 1 << 12;

/// Diagonal shift applied once when the plain factorization fails.
pub const CHOLESKY_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstParams {
    pub hurst: f64,
    pub dim: usize,
    pub n_grid: usize,
    pub seed: u64,
}

impl HurstParams {
    pub fn new(hurst: f64, dim: usize, depth: u32, seed: u64) -> Result<Self> {
        let p = Self {
            hurst,
            dim,
            n_grid: 1usize.checked_shl(depth).unwrap_or(0),
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_hurst(self.hurst)?;
        if self.dim == 0 {
            return domain("dimension must be at least 1");
        }
        if self.n_grid == 0 || !self.n_grid.is_power_of_two() {
            return domain(format!("n_grid = {} is not a power of two", self.n_grid));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

fn check_hurst(h: f64) -> Result<()> {
    if !(h > 0.0 && h < 1.0) {
        return domain(format!("Hurst exponent {h} outside (0, 1)"));
    }
    Ok(())
}

/// `E[W_s W_t]` for one scalar component.
pub fn fbm_covariance(hurst: f64, s: f64, t: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
        return domain(format!("times ({s}, {t}) outside [0, 1]"));
    }
    Ok(cov_unchecked(hurst, s, t))
}

fn cov_unchecked(hurst: f64, s: f64, t: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2))
}

/// Covariance of two increments `n` steps of size `step` apart.
fn increment_autocov(hurst: f64, step: f64, lag: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = lag as f64;
    let g = if lag == 0 {
        1.0
    } else {
        0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).powf(h2))
    };
    g * step.powf(h2)
}

/// Lower Cholesky factor of the increment covariance.
#[derive(Debug)]
pub enum IncrementFactor {
    /// Independent increments (`H = 1/2`); the factor is `scale * I`.
    Diagonal { n: usize, scale: f64 },
    /// Dense row-major lower-triangular factor.
    Dense {
        n: usize,
        lower: Vec<f64>,
        jittered: bool,
    },
}

impl IncrementFactor {
    pub fn build(hurst: f64, n_grid: usize) -> Result<Self> {
        check_hurst(hurst)?;
        let step = 1.0 / n_grid as f64;
        if hurst == 0.5 {
            return Ok(IncrementFactor::Diagonal {
                n: n_grid,
                scale: step.sqrt(),
            });
        }
        if n_grid > MAX_DENSE_GRID {
            return Err(Error::Resource {
                requested: n_grid * n_grid,
                budget: MAX_DENSE_GRID * MAX_DENSE_GRID,
            });
        }
        let acov: Vec<f64> = (0..n_grid)
            .map(|k| increment_autocov(hurst, step, k))
            .collect();
        let matrix = |jitter: f64| {
            let mut a = vec![0.0; n_grid * n_grid];
            for i in 0..n_grid {
                for j in 0..=i {
                    a[i * n_grid + j] = acov[i - j];
                }
                a[i * n_grid + i] += jitter;
            }
            a
        };
        let mut a = matrix(0.0);
        match cholesky_in_place(&mut a, n_grid) {
            Ok(()) => Ok(IncrementFactor::Dense {
                n: n_grid,
                lower: a,
                jittered: false,
            }),
            Err(first) => {
                log::warn!("{first}; retrying with jitter {CHOLESKY_JITTER:e}");
                let mut a = matrix(CHOLESKY_JITTER);
                cholesky_in_place(&mut a, n_grid)?;
                Ok(IncrementFactor::Dense {
                    n: n_grid,
                    lower: a,
                    jittered: true,
                })
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            IncrementFactor::Diagonal { n, .. } | IncrementFactor::Dense { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn jittered(&self) -> bool {
        matches!(self, IncrementFactor::Dense { jittered: true, .. })
    }

    /// Writes `L z` into `out`.
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        match self {
            IncrementFactor::Diagonal { scale, .. } => {
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = scale * zi;
                }
            }
            IncrementFactor::Dense { n, lower, .. } => {
                for i in 0..*n {
                    let row = &lower[i * n..i * n + i + 1];
                    out[i] = row.iter().zip(&z[..=i]).map(|(a, b)| a * b).sum();
                }
            }
        }
    }
}

/// In-place lower Cholesky factorization of a row-major symmetric matrix
/// whose lower triangle is filled. The strict upper triangle is zeroed.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> Result<()> {
    for j in 0..n {
        let (head, tail) = a.split_at_mut((j + 1) * n);
        let row_j = &mut head[j * n..(j + 1) * n];
        let d = row_j[j] - row_j[..j].iter().map(|v| v * v).sum::<f64>();
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        row_j[j] = djj;
        for v in &mut row_j[j + 1..] {
            *v = 0.0;
        }
        let row_j = &head[j * n..j * n + j];
        tail.par_chunks_mut(n).with_min_len(64).for_each(|row_i| {
            let s: f64 = row_i[..j].iter().zip(row_j).map(|(x, y)| x * y).sum();
            row_i[j] = (row_i[j] - s) / djj;
        });
    }
    Ok(())
}

type FactorKey = (u64, usize);

static FACTOR_CACHE: LazyLock<RwLock<HashMap<FactorKey, Arc<IncrementFactor>>>> =
    LazyLock::new(|| RwLock::new(HashMap::new()));

/// Cached factor for `(hurst, n_grid)`; built at most once per key.
pub fn increment_factor(hurst: f64, n_grid: usize) -> Result<Arc<IncrementFactor>> {
    let key = (hurst.to_bits(), n_grid);
    if let Some(f) = FACTOR_CACHE
        .read()
        .expect("factor cache poisoned")
        .get(&key)
    {
        return Ok(Arc::clone(f));
    }
    let mut cache = FACTOR_CACHE.write().expect("factor cache poisoned");
    if let Some(f) = cache.get(&key) {
        return Ok(Arc::clone(f));
    }
    let f = Arc::new(IncrementFactor::build(hurst, n_grid)?);
    cache.insert(key, Arc::clone(&f));
    Ok(f)
}

/// Random source for component `component` of the path seeded by `seed`:
/// ChaCha20 keyed by the seed, one stream per component.
pub fn component_rng(seed: u64, component: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(component as u64);
    rng
}

/// One exact-in-law fBm sample on the grid, starting at the origin.
pub fn sample_path(params: &HurstParams) -> Result<SampledPath> {
    params.validate()?;
    let factor = increment_factor(params.hurst, params.n_grid)?;
    Ok(sample_with_factor(&factor, params.dim, params.seed))
}

fn sample_with_factor(factor: &IncrementFactor, dim: usize, seed: u64) -> SampledPath {
    let n = factor.len();
    let mut values = vec![0.0; (n + 1) * dim];
    let mut z = vec![0.0; n];
    let mut inc = vec![0.0; n];
    for c in 0..dim {
        let mut rng = component_rng(seed, c);
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        factor.apply(&z, &mut inc);
        let mut acc = 0.0;
        for (k, d) in inc.iter().enumerate() {
            acc += d;
            values[(k + 1) * dim + c] = acc;
        }
    }
    SampledPath::new(n, dim, values).expect("sampler produced a well-formed path")
}

/// Seed of path `index` in an ensemble drawn from `seed`.
pub fn ensemble_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

/// `count` independent paths; path `i` uses seed `ensemble_seed(seed, offset + i)`.
pub fn sample_ensemble(
    params: &HurstParams,
    offset: usize,
    count: usize,
) -> Result<Vec<SampledPath>> {
    params.validate()?;
    let factor = increment_factor(params.hurst, params.n_grid)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| sample_with_factor(&factor, params.dim, ensemble_seed(params.seed, offset + i)))
        .collect())
}

/// Variance of a linear combination of increments minus the
/// local-nondeterminism lower bound `k_h * sum u_i^2 |dt_i|^{2H}`.
pub fn local_nondeterminism_gap(hurst: f64, times: &[f64], u: &[f64], k_h: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if times.len() < 2 || u.len() != times.len() - 1 {
        return domain("need at least two times and one coefficient per increment");
    }
    if times.windows(2).any(|w| w[0] >= w[1]) || times[0] < 0.0 || times[times.len() - 1] > 1.0 {
        return domain("times must be strictly increasing in [0, 1]");
    }
    if !(k_h > 0.0) {
        return domain("K_H must be positive");
    }
    let (var, bound) = nondeterminism_terms(hurst, times, u);
    Ok(var - k_h * bound)
}

fn nondeterminism_terms(hurst: f64, times: &[f64], u: &[f64]) -> (f64, f64) {
    let r = |a: f64, b: f64| cov_unchecked(hurst, a, b);
    let m = u.len();
    let mut var = 0.0;
    for i in 0..m {
        for j in 0..m {
            let c = r(times[i + 1], times[j + 1])
                - r(times[i + 1], times[j])
                - r(times[i], times[j + 1])
                + r(times[i], times[j]);
            var += u[i] * u[j] * c;
        }
    }
    let bound = (0..m)
        .map(|i| u[i] * u[i] * (times[i + 1] - times[i]).powf(2.0 * hurst))
        .sum();
    (var, bound)
}

/// One configuration of the nondeterminism search grid.
#[derive(Debug, Clone, Serialize)]
pub struct NondeterminismCase {
    pub times: Vec<f64>,
    pub u: Vec<f64>,
}

/// Random configurations with 1..=`max_increments` increments.
pub fn nondeterminism_search_grid(
    max_increments: usize,
    trials: usize,
    seed: u64,
) -> Vec<NondeterminismCase> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| {
            let m = rng.random_range(1..=max_increments);
            let mut times: Vec<f64> = (0..=m).map(|_| rng.random::<f64>()).collect();
            times.sort_by(f64::total_cmp);
            times.dedup();
            while times.len() < m + 1 {
                times.push(1.0);
                times.dedup();
            }
            let u = (0..times.len() - 1)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            NondeterminismCase { times, u }
        })
        .collect()
}

/// Empirical `K_H`: the smallest ratio `Var / sum u_i^2 |dt_i|^{2H}` over the grid.
pub fn calibrate_nondeterminism_constant(hurst: f64, grid: &[NondeterminismCase]) -> Result<f64> {
    check_hurst(hurst)?;
    let k = grid
        .iter()
        .filter_map(|c| {
            let (var, bound) = nondeterminism_terms(hurst, &c.times, &c.u);
            (bound > 0.0).then_some(var / bound)
        })
        .fold(f64::INFINITY, f64::min);
    if !k.is_finite() {
        return domain("search grid has no nondegenerate configuration");
    }
    Ok(k)
}
