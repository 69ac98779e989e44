//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use youngreg::{Atom, FourierVectorField, SampledPath};

const GL7_NODES: [f64; 7] = [
    -0.949_107_912_342_758_5,
    -0.741_531_185_599_394_4,
    -0.405_845_151_377_397_2,
    0.0,
    0.405_845_151_377_397_2,
    0.741_531_185_599_394_4,
    0.949_107_912_342_758_5,
];
const GL7_WEIGHTS: [f64; 7] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_9,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
];

fn gl7<F: Fn(f64) -> Complex64>(a: f64, b: f64, f: &F) -> Complex64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    GL7_NODES
        .iter()
        .zip(GL7_WEIGHTS)
        .map(|(x, w)| f(mid + half * x) * w)
        .sum::<Complex64>()
        * half
}

/// Adaptive bisection on a 7-point Gauss rule.
pub fn adaptive_quad<F: Fn(f64) -> Complex64>(a: f64, b: f64, f: &F, tol: f64) -> Complex64 {
    fn rec<F: Fn(f64) -> Complex64>(
        a: f64,
        b: f64,
        f: &F,
        whole: Complex64,
        tol: f64,
        depth: u32,
    ) -> Complex64 {
        let m = 0.5 * (a + b);
        let (l, r) = (gl7(a, m, f), gl7(m, b, f));
        if (l + r - whole).norm() <= tol || depth > 40 {
            l + r
        } else {
            rec(a, m, f, l, 0.5 * tol, depth + 1) + rec(m, b, f, r, 0.5 * tol, depth + 1)
        }
    }
    rec(a, b, f, gl7(a, b, f), tol, 0)
}

pub fn adaptive_quad_real<F: Fn(f64) -> f64>(a: f64, b: f64, f: &F, tol: f64) -> f64 {
    adaptive_quad(a, b, &|u| Complex64::new(f(u), 0.0), tol).re
}

/// Interpolated path value, written out independently of the library.
pub fn interp(path: &SampledPath, u: f64) -> Vec<f64> {
    let n = path.n_grid();
    let x = (u * n as f64).clamp(0.0, n as f64);
    let k = (x.floor() as usize).min(n - 1);
    let f = x - k as f64;
    path.value(k)
        .iter()
        .zip(path.value(k + 1))
        .map(|(a, b)| a + f * (b - a))
        .collect()
}

/// `int_{k_a h}^{k_b h} g(u) du`, one adaptive quadrature per grid cell.
pub fn per_segment<F: Fn(f64) -> Complex64>(
    n_grid: usize,
    ka: usize,
    kb: usize,
    g: &F,
    tol: f64,
) -> Complex64 {
    let h = 1.0 / n_grid as f64;
    (ka..kb)
        .map(|k| adaptive_quad(k as f64 * h, (k + 1) as f64 * h, g, tol))
        .sum()
}

/// `Re sum c e^{i(omega t + xi . x)}`, evaluated atom by atom.
pub fn eval_field(f: &FourierVectorField, t: f64, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; f.dim()];
    for a in f.atoms() {
        let phase: f64 = a.omega * t + a.xi.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
        let e = Complex64::from_polar(1.0, phase);
        for (o, c) in out.iter_mut().zip(&a.c) {
            *o += (c * e).re;
        }
    }
    out
}

/// Classical left-point Riemann–Stieltjes sum `sum theta_i (A_{i+1} - A_i)` for scalar paths.
pub fn classical_young(a: &SampledPath, theta: &SampledPath, ka: usize, kb: usize) -> f64 {
    let mut acc = 0.0;
    for i in ka..kb {
        acc += theta.value(i)[0] * (a.value(i + 1)[0] - a.value(i)[0]);
    }
    acc
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Reality-closed field of `pairs` random conjugate pairs.
pub fn random_field(
    rng: &mut ChaCha8Rng,
    dim: usize,
    pairs: usize,
    omega_max: f64,
    xi_max: f64,
) -> FourierVectorField {
    let atoms = (0..pairs)
        .map(|_| {
            let omega = rng.random_range(-omega_max..omega_max);
            let xi = (0..dim)
                .map(|_| rng.random_range(-xi_max..xi_max))
                .collect();
            let c = (0..dim)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            Atom::new(omega, xi, c)
        })
        .collect();
    FourierVectorField::with_conjugates(dim, atoms).expect("random field is well formed")
}

pub fn random_interval(rng: &mut ChaCha8Rng, n_grid: usize) -> (usize, usize) {
    loop {
        let a = rng.random_range(0..n_grid);
        let b = rng.random_range(1..=n_grid);
        if a < b {
            return (a, b);
        }
    }
}

pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[((v.len() - 1) as f64 * q).round() as usize]
}
