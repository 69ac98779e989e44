//! Fixed-point solution of `theta_t = theta_0 + int_0^t (sigma_{du} b)(theta_u)`.
//!
//! The solution `x = theta + w` of `dx = b(t, x) dt + dw` is represented
//! through the controlled remainder `theta`. Time is split into windows short
//! enough for the Picard map to contract; inside each window the map is
//! iterated until the sup-norm change drops below the tolerance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::{estimate_averaging_constant, AveragedIncrements, AveragingEstimate};
use crate::dyadic::{StreamingDyadic, Truncation};
use crate::error::{domain, Result};
use crate::field::FourierVectorField;
use crate::mollify::{mollify, Mollifier};
use crate::path::{euclid_norm, SampledPath};
use crate::young::{holder_norm_indices, IncrementField};

const PARALLEL_WINDOW: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Regularity index of the averaging constant.
    pub alpha: f64,
    /// Target Hölder exponent of `theta`, in `(1/2, 1]`.
    pub gamma: f64,
    /// Fraction of the contraction-permitted window actually used.
    pub step_safety: f64,
    pub picard_tol: f64,
    pub max_picard: usize,
    /// Solve on the path coarsened to this depth; `None` keeps the path grid.
    pub depth: Option<u32>,
    /// Lattice used to estimate the averaging constant.
    pub k_truncation: Truncation,
    /// Use this averaging constant instead of estimating it.
    pub k_override: Option<f64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            alpha: -0.6,
            gamma: 0.55,
            step_safety: 0.9,
            picard_tol: 1e-9,
            max_picard: 200,
            depth: None,
            k_truncation: Truncation::new(6, 0, 8.0, 8.0),
            k_override: None,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.5 && self.gamma <= 1.0) {
            return domain(format!("gamma = {} outside (1/2, 1]", self.gamma));
        }
        if !(self.step_safety > 0.0 && self.step_safety < 1.0) {
            return domain("step_safety must lie in (0, 1)");
        }
        if !(self.picard_tol > 0.0) {
            return domain("picard_tol must be positive");
        }
        if self.max_picard == 0 {
            return domain("max_picard must be at least 1");
        }
        if let Some(k) = self.k_override {
            if !(k >= 0.0 && k.is_finite()) {
                return domain("k_override must be finite and nonnegative");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    /// The contraction window is shorter than one grid step; single-step
    /// windows were used and contraction is not guaranteed.
    StepUnderflow,
}

/// Which norm of `b` entered the window rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepNorm {
    AlphaPlus2,
    AlphaPlus1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub start: usize,
    pub end: usize,
    pub picard_iters: usize,
    pub final_residual: f64,
    /// `||theta||_{gamma, window}`.
    pub holder_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub theta: SampledPath,
    /// `theta - x0`, accumulated without reference to `x0`.
    pub drift: SampledPath,
    pub per_window: Vec<WindowReport>,
    pub holder_gamma_norm: f64,
    pub status: SolveStatus,
    pub k_estimate: f64,
    pub step_norm: StepNorm,
    pub window_steps: usize,
}

impl SolveResult {
    /// `x = theta + w`.
    pub fn solution(&self, path: &SampledPath) -> Result<SampledPath> {
        self.theta.add(path)
    }

    pub fn total_picard_iters(&self) -> usize {
        self.per_window.iter().map(|w| w.picard_iters).sum()
    }
}

/// `(step, state, out)`: writes the increment over one grid step.
type Increment<'a> = dyn Fn(usize, &[f64], &mut [f64]) + Sync + 'a;

/// Picard iteration for `state_{a+k} = state_a + sum_{i<a+k} inc(i, state_i)` on one window.
fn picard_window(
    state: &mut [f64],
    m: usize,
    (a, e): (usize, usize),
    tol: f64,
    max_iter: usize,
    increment: &Increment<'_>,
) -> (usize, f64) {
    let mut residual = f64::INFINITY;
    let mut iters = 0;
    let mut incs = vec![0.0; (e - a) * m];
    while iters < max_iter {
        iters += 1;
        {
            let st: &[f64] = state;
            let body = |(j, out): (usize, &mut [f64])| {
                let i = a + j;
                increment(i, &st[i * m..(i + 1) * m], out);
            };
            if e - a >= PARALLEL_WINDOW {
                incs.par_chunks_mut(m).enumerate().for_each(body);
            } else {
                incs.chunks_mut(m).enumerate().for_each(body);
            }
        }
        residual = 0.0;
        let mut acc = state[a * m..(a + 1) * m].to_vec();
        for j in 0..e - a {
            let k = a + j + 1;
            let mut change = 0.0;
            for c in 0..m {
                acc[c] += incs[j * m + c];
                let old = state[k * m + c];
                change += (acc[c] - old) * (acc[c] - old);
                state[k * m + c] = acc[c];
            }
            residual = residual.max(change.sqrt());
        }
        if residual <= tol {
            break;
        }
    }
    (iters, residual)
}

fn windows(start: usize, n_grid: usize, steps: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut a = start;
    while a < n_grid {
        let e = (a + steps).min(n_grid);
        out.push((a, e));
        a = e;
    }
    out
}

struct Plan {
    path: SampledPath,
    increments: AveragedIncrements,
    k: f64,
    step_norm: StepNorm,
    steps: usize,
    underflow: bool,
}

fn plan(b: &FourierVectorField, path: &SampledPath, x0: &[f64], cfg: &SolveConfig) -> Result<Plan> {
    cfg.validate()?;
    if b.dim() != path.dim() || x0.len() != path.dim() {
        return domain("field, path and initial condition must share a dimension");
    }
    let path = match cfg.depth {
        Some(d) if d > path.depth() => {
            return domain(format!(
                "solver depth {d} exceeds the path depth {}",
                path.depth()
            ))
        }
        Some(d) => path.coarsen(path.depth() - d)?,
        None => path.clone(),
    };
    let k = match cfg.k_override {
        Some(k) => k,
        None => {
            let mut tr = cfg.k_truncation;
            tr.n_max = tr.n_max.min(path.depth());
            estimate_averaging_constant(&StreamingDyadic::new(&path, tr)?, cfg.alpha, cfg.gamma).k
        }
    };
    let mut step_norm = StepNorm::AlphaPlus2;
    let mut norm = b.n_alpha_norm(cfg.alpha + 2.0);
    if !norm.is_finite() {
        log::warn!("N_(alpha+2)(b) is not finite; falling back to N_(alpha+1)");
        step_norm = StepNorm::AlphaPlus1;
        norm = b.n_alpha_norm(cfg.alpha + 1.0);
    }
    let n = path.n_grid();
    let (steps, underflow) = if k * norm == 0.0 {
        (n, false)
    } else {
        let t = (0.5 * cfg.step_safety / (k * norm)).powf(1.0 / cfg.gamma);
        let raw = (t * n as f64).floor();
        if raw < 1.0 {
            (1, true)
        } else {
            ((raw as usize).min(n), false)
        }
    };
    let increments = AveragedIncrements::new(b, &path)?;
    Ok(Plan {
        path,
        increments,
        k,
        step_norm,
        steps,
        underflow,
    })
}

/// Solves on the whole of `[0, 1]` from the constant initial iterate.
pub fn solve_young_ode(
    b: &FourierVectorField,
    path: &SampledPath,
    x0: &[f64],
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    solve_impl(b, path, x0, 0, None, cfg)
}

/// Same, but the first Picard iterate in every window is `initial` (restarted at the window start).
pub fn solve_young_ode_with_initial(
    b: &FourierVectorField,
    path: &SampledPath,
    x0: &[f64],
    initial: &SampledPath,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    solve_impl(b, path, x0, 0, Some(initial), cfg)
}

/// Solves on `[start / n_grid, 1]` with `theta(start) = x_start`; earlier
/// grid points are left at `x_start`.
pub fn solve_young_ode_from(
    b: &FourierVectorField,
    path: &SampledPath,
    x_start: &[f64],
    start: usize,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    solve_impl(b, path, x_start, start, None, cfg)
}

fn solve_impl(
    b: &FourierVectorField,
    path: &SampledPath,
    x0: &[f64],
    start: usize,
    initial: Option<&SampledPath>,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    let plan = plan(b, path, x0, cfg)?;
    let n = plan.path.n_grid();
    let d = plan.path.dim();
    if start >= n {
        return domain("start index must precede the final grid point");
    }
    let mut drift = vec![0.0; (n + 1) * d];
    if let Some(init) = initial {
        if init.n_grid() != n || init.dim() != d {
            return domain("initial iterate must live on the solver grid");
        }
        for k in 0..=n {
            for c in 0..d {
                drift[k * d + c] = init.value(k)[c] - x0[c];
            }
        }
    }
    let g = &plan.increments;
    let increment = |i: usize, dr: &[f64], out: &mut [f64]| {
        let x: Vec<f64> = dr.iter().zip(x0).map(|(a, b)| a + b).collect();
        g.increment(i, i + 1, &x, out);
    };
    let mut per_window = Vec::new();
    let mut status = if plan.underflow {
        SolveStatus::StepUnderflow
    } else {
        SolveStatus::Converged
    };
    for (a, e) in windows(start, n, plan.steps) {
        if let Some(initial) = initial {
            // shift the supplied iterate so it starts at the current window value
            let shift: Vec<f64> = (0..d)
                .map(|c| drift[a * d + c] - initial.value(a)[c] + x0[c])
                .collect();
            for k in a + 1..=e {
                for c in 0..d {
                    drift[k * d + c] = initial.value(k)[c] - x0[c] + shift[c];
                }
            }
        } else {
            let base: Vec<f64> = drift[a * d..(a + 1) * d].to_vec();
            for k in a + 1..=e {
                drift[k * d..(k + 1) * d].copy_from_slice(&base);
            }
        }
        let (iters, residual) = picard_window(
            &mut drift,
            d,
            (a, e),
            cfg.picard_tol,
            cfg.max_picard,
            &increment,
        );
        if residual > cfg.picard_tol && status == SolveStatus::Converged {
            status = SolveStatus::MaxIter;
        }
        per_window.push(WindowReport {
            start: a,
            end: e,
            picard_iters: iters,
            final_residual: residual,
            holder_norm: 0.0,
        });
    }
    for k in 0..start {
        drift[k * d..(k + 1) * d].iter_mut().for_each(|v| *v = 0.0);
    }
    let theta_values: Vec<f64> = drift
        .chunks(d)
        .flat_map(|dr| dr.iter().zip(x0).map(|(a, b)| a + b))
        .collect();
    let theta = SampledPath::new(n, d, theta_values)?;
    for w in per_window.iter_mut() {
        w.holder_norm = holder_norm_indices(&theta, cfg.gamma, w.start, w.end);
    }
    Ok(SolveResult {
        holder_gamma_norm: holder_norm_indices(&theta, cfg.gamma, start, n),
        drift: SampledPath::new(n, d, drift)?,
        theta,
        per_window,
        status,
        k_estimate: plan.k,
        step_norm: plan.step_norm,
        window_steps: plan.steps,
    })
}

/// Classical RK4 for `theta' = b(t, theta + w_t)` on `2^depth` steps, with `w`
/// the piecewise-linear interpolant; returned on the path grid.
pub fn solve_classical_reference(
    b: &FourierVectorField,
    path: &SampledPath,
    x0: &[f64],
    depth: u32,
) -> Result<SampledPath> {
    if depth < path.depth() {
        return domain(format!(
            "reference depth {depth} is coarser than the path depth {}",
            path.depth()
        ));
    }
    if b.dim() != path.dim() || x0.len() != path.dim() {
        return domain("field, path and initial condition must share a dimension");
    }
    let d = path.dim();
    let steps = 1usize << depth;
    let stride = steps / path.n_grid();
    let h = 1.0 / steps as f64;
    let mut y = x0.to_vec();
    let mut out = Vec::with_capacity((path.n_grid() + 1) * d);
    out.extend_from_slice(&y);
    let mut w = vec![0.0; d];
    let mut arg = vec![0.0; d];
    let mut rhs = |t: f64, y: &[f64], out: &mut [f64]| {
        path.value_at(t, &mut w);
        for c in 0..d {
            arg[c] = y[c] + w[c];
        }
        b.eval_into(t, &arg, out);
    };
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    for i in 0..steps {
        let t = i as f64 * h;
        rhs(t, &y, &mut k1);
        for c in 0..d {
            tmp[c] = y[c] + 0.5 * h * k1[c];
        }
        rhs(t + 0.5 * h, &tmp, &mut k2);
        for c in 0..d {
            tmp[c] = y[c] + 0.5 * h * k2[c];
        }
        rhs(t + 0.5 * h, &tmp, &mut k3);
        for c in 0..d {
            tmp[c] = y[c] + h * k3[c];
        }
        rhs(t + h, &tmp, &mut k4);
        for c in 0..d {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        if (i + 1) % stride == 0 {
            out.extend_from_slice(&y);
        }
    }
    SampledPath::new(path.n_grid(), d, out)
}

/// Spatial derivative `D_t = d theta_t / d x0` on the grid, row-major `d x d` per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobianPath {
    pub n_grid: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl JacobianPath {
    pub fn at(&self, k: usize) -> &[f64] {
        let s = self.dim * self.dim;
        &self.values[k * s..(k + 1) * s]
    }

    /// Largest operator 2-norm over the grid.
    pub fn sup_operator_norm(&self) -> f64 {
        (0..=self.n_grid)
            .map(|k| operator_norm(self.at(k), self.dim))
            .fold(0.0, f64::max)
    }
}

/// Spectral norm of a row-major `d x d` matrix by power iteration on `A^T A`.
pub fn operator_norm(a: &[f64], d: usize) -> f64 {
    if d == 1 {
        return a[0].abs();
    }
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let av: Vec<f64> = (0..d)
            .map(|r| (0..d).map(|c| a[r * d + c] * v[c]).sum())
            .collect();
        let atav: Vec<f64> = (0..d)
            .map(|c| (0..d).map(|r| a[r * d + c] * av[r]).sum())
            .collect();
        let norm = euclid_norm(&atav);
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        v = atav.iter().map(|x| x / norm).collect();
        if (next - lambda).abs() <= 1e-15 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

/// Solves for `theta`, then for `D_t = I + int (sigma_{du} Db)(theta_u) D_u`
/// with the same windows and Picard tolerance.
pub fn flow_jacobian(
    b: &FourierVectorField,
    path: &SampledPath,
    x0: &[f64],
    cfg: &SolveConfig,
) -> Result<(SolveResult, JacobianPath)> {
    let sol = solve_young_ode(b, path, x0, cfg)?;
    let plan = plan(b, path, x0, cfg)?;
    let n = plan.path.n_grid();
    let d = plan.path.dim();
    let m = d * d;
    let mats: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut out = vec![0.0; m];
            plan.increments
                .jacobian(i, i + 1, sol.theta.value(i), &mut out);
            out
        })
        .collect();
    let mut state = vec![0.0; (n + 1) * m];
    for c in 0..d {
        state[c * d + c] = 1.0;
    }
    let increment = |i: usize, dm: &[f64], out: &mut [f64]| {
        let a = &mats[i];
        for r in 0..d {
            for c in 0..d {
                out[r * d + c] = (0..d).map(|k| a[r * d + k] * dm[k * d + c]).sum();
            }
        }
    };
    for (a, e) in windows(0, n, plan.steps) {
        let base = state[a * m..(a + 1) * m].to_vec();
        for k in a + 1..=e {
            state[k * m..(k + 1) * m].copy_from_slice(&base);
        }
        picard_window(
            &mut state,
            m,
            (a, e),
            cfg.picard_tol,
            cfg.max_picard,
            &increment,
        );
    }
    Ok((
        sol,
        JacobianPath {
            n_grid: n,
            dim: d,
            values: state,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowLipschitzReport {
    /// `max |x_t(x0) - x_t(x0')| / |x0 - x0'|` over the grid of starting points.
    pub finite_difference: f64,
    /// `max_t ||D_t||` over the starting points.
    pub jacobian_sup: f64,
}

pub fn flow_lipschitz_estimate(
    b: &FourierVectorField,
    path: &SampledPath,
    x0_grid: &[Vec<f64>],
    cfg: &SolveConfig,
) -> Result<FlowLipschitzReport> {
    if x0_grid.len() < 2 {
        return domain("need at least two starting points");
    }
    let runs: Vec<(SolveResult, JacobianPath)> = x0_grid
        .par_iter()
        .map(|x0| flow_jacobian(b, path, x0, cfg))
        .collect::<Result<_>>()?;
    let mut fd: f64 = 0.0;
    for i in 0..x0_grid.len() {
        for j in i + 1..x0_grid.len() {
            let dx: Vec<f64> = x0_grid[i]
                .iter()
                .zip(&x0_grid[j])
                .map(|(a, b)| a - b)
                .collect();
            let dist = euclid_norm(&dx);
            if dist == 0.0 {
                continue;
            }
            let (di, dj) = (&runs[i].0.drift, &runs[j].0.drift);
            for k in 0..=di.n_grid() {
                let diff: Vec<f64> = dx
                    .iter()
                    .zip(di.value(k).iter().zip(dj.value(k)))
                    .map(|(x, (a, b))| x + (a - b))
                    .collect();
                fd = fd.max(euclid_norm(&diff) / dist);
            }
        }
    }
    let jacobian_sup = runs
        .iter()
        .map(|(_, j)| j.sup_operator_norm())
        .fold(0.0, f64::max);
    Ok(FlowLipschitzReport {
        finite_difference: fd,
        jacobian_sup,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: u32,
    /// `||x^n - x||_inf`.
    pub sup_diff: f64,
    /// `N_{alpha+1}(b - b_n)`.
    pub approx_norm: f64,
    pub ratio: f64,
    /// Averaging constant of the perturbed path `x^n = theta^n + w`.
    pub k_perturbed: AveragingEstimate,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub scheme: String,
    pub base_status: SolveStatus,
    pub base_k: f64,
    pub rows: Vec<ConvergenceRow>,
}

/// Solves with the mollified drifts `b_n` and compares against the solution with `b`.
pub fn convergence_experiment(
    b: &FourierVectorField,
    path: &SampledPath,
    x0: &[f64],
    scheme: &dyn Mollifier,
    n_list: &[u32],
    cfg: &SolveConfig,
) -> Result<ConvergenceReport> {
    let base = solve_young_ode(b, path, x0, cfg)?;
    let rows = n_list
        .iter()
        .map(|&n| {
            let bn = mollify(b, n, scheme, cfg.alpha)?;
            let sol = solve_young_ode(&bn, path, x0, cfg)?;
            let sup_diff = sol.theta.sup_distance(&base.theta)?;
            let approx_norm = b.sub(&bn)?.n_alpha_norm(cfg.alpha + 1.0);
            let w = match cfg.depth {
                Some(dp) if dp < path.depth() => path.coarsen(path.depth() - dp)?,
                _ => path.clone(),
            };
            let xn = sol.theta.add(&w)?;
            let mut tr = cfg.k_truncation;
            tr.n_max = tr.n_max.min(xn.depth());
            let k_perturbed =
                estimate_averaging_constant(&StreamingDyadic::new(&xn, tr)?, cfg.alpha, cfg.gamma);
            Ok(ConvergenceRow {
                n,
                sup_diff,
                approx_norm,
                ratio: if approx_norm > 0.0 {
                    sup_diff / approx_norm
                } else {
                    0.0
                },
                k_perturbed,
                status: sol.status,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport {
        scheme: scheme.name().to_string(),
        base_status: base.status,
        base_k: base.k_estimate,
        rows,
    })
}
