//! Derived examples checked against independent oracles or calibrated bounds.

mod common;

use youngreg::averaging::{estimate_averaging_constant, AveragedIncrements};
use youngreg::dyadic::{build_dyadic_table, StreamingDyadic, Truncation};
use youngreg::fbm::{sample_ensemble, sample_path, HurstParams};
use youngreg::mollify::mollifier;
use youngreg::solver::{
    convergence_experiment, flow_jacobian, flow_lipschitz_estimate, solve_classical_reference,
    solve_young_ode, solve_young_ode_from, SolveConfig,
};
use youngreg::stats::{
    log_r_lambda, log_s_lambda, moment_check, q_from_logs, McEstimate, MomentSetup,
};
use youngreg::young::{chasles_defect_mixed, continuity_modulus, holder_norm, young_integral};
use youngreg::{Atom, FourierVectorField, SampledPath};

use common::*;
use num_complex::Complex64;
use rand::Rng;

fn bundled(name: &str) -> FourierVectorField {
    FourierVectorField::load(format!("{}/fields/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn precise() -> SolveConfig {
    SolveConfig {
        picard_tol: 1e-13,
        ..SolveConfig::default()
    }
}

#[test]
fn rk4_reference_converges_at_fourth_order() {
    let b = bundled("smooth4.json");
    let path = SampledPath::from_fn(16, 2, |t| vec![(3.0 * t).sin(), t * t]).unwrap();
    let x0 = [0.3, -0.1];
    let reference = solve_classical_reference(&b, &path, &x0, 14).unwrap();
    let errs: Vec<f64> = (5..=8)
        .map(|d| {
            solve_classical_reference(&b, &path, &x0, d)
                .unwrap()
                .sup_distance(&reference)
                .unwrap()
        })
        .collect();
    let levels: Vec<f64> = (5..=8).map(f64::from).collect();
    let logs: Vec<f64> = errs.iter().map(|e| e.log2()).collect();
    let (slope, _) = youngreg::stats::linear_fit(&levels, &logs);
    assert!((-slope - 4.0).abs() <= 0.5, "observed order {}", -slope);
}

#[test]
fn jacobian_matches_central_differences() {
    let b = bundled("smooth4.json");
    let path = sample_path(&HurstParams::new(0.5, 2, 10, 21).unwrap()).unwrap();
    let x0 = [0.2, -0.4];
    let cfg = precise();
    let (_, jac) = flow_jacobian(&b, &path, &x0, &cfg).unwrap();
    let h = 1e-4;
    for col in 0..2 {
        let mut xp = x0;
        let mut xm = x0;
        xp[col] += h;
        xm[col] -= h;
        let tp = solve_young_ode(&b, &path, &xp, &cfg).unwrap().theta;
        let tm = solve_young_ode(&b, &path, &xm, &cfg).unwrap().theta;
        for k in [256, 512, 1024] {
            for row in 0..2 {
                let fd = (tp.value(k)[row] - tm.value(k)[row]) / (2.0 * h);
                let an = jac.at(k)[row * 2 + col];
                let scale = jac.at(k).iter().map(|v| v.abs()).fold(0.0, f64::max);
                assert!(
                    (fd - an).abs() <= 1e-3 * scale,
                    "D[{row},{col}] at {k}: fd {fd} vs {an}"
                );
            }
        }
    }
}

#[test]
fn flow_lipschitz_estimate_tracks_jacobian_norm() {
    let b = bundled("rough6.json");
    let path = sample_path(&HurstParams::new(0.5, 1, 10, 22).unwrap()).unwrap();
    let grid: Vec<Vec<f64>> = (0..=20).map(|i| vec![-0.5 + 0.05 * i as f64]).collect();
    let rep = flow_lipschitz_estimate(&b, &path, &grid, &precise()).unwrap();
    let rel = (rep.finite_difference - rep.jacobian_sup).abs() / rep.jacobian_sup;
    assert!(
        rel <= 0.1,
        "fd {} vs jacobian {}",
        rep.finite_difference,
        rep.jacobian_sup
    );
}

#[test]
fn restarting_at_midpoint_reproduces_the_solution() {
    let b = bundled("smooth4.json");
    let path = sample_path(&HurstParams::new(0.5, 2, 12, 23).unwrap()).unwrap();
    let cfg = SolveConfig::default();
    let full = solve_young_ode(&b, &path, &[0.1, 0.0], &cfg).unwrap();
    let mid = path.n_grid() / 2;
    let rest = solve_young_ode_from(&b, &path, full.theta.value(mid), mid, &cfg).unwrap();
    for k in mid..=path.n_grid() {
        for c in 0..2 {
            assert!(
                (full.theta.value(k)[c] - rest.theta.value(k)[c]).abs() <= 2.0 * cfg.picard_tol
            );
        }
    }
    // controlled-path identity
    let x = full.solution(&path).unwrap();
    for k in 0..=path.n_grid() {
        for c in 0..2 {
            assert_eq!(x.value(k)[c], full.theta.value(k)[c] + path.value(k)[c]);
        }
    }
    assert_eq!(full.theta.value(0), &[0.1, 0.0]);
}

#[test]
fn band_limited_field_is_fixed_by_mollification() {
    let b = FourierVectorField::with_conjugates(
        1,
        vec![Atom::new(2.0, vec![0.0], vec![Complex64::new(0.3, 0.2)])],
    )
    .unwrap();
    let path = sample_path(&HurstParams::new(0.5, 1, 9, 24).unwrap()).unwrap();
    let rep = convergence_experiment(
        &b,
        &path,
        &[0.0],
        mollifier("exp").unwrap(),
        &[1, 2, 4],
        &SolveConfig::default(),
    )
    .unwrap();
    assert!(rep
        .rows
        .iter()
        .all(|r| r.sup_diff == 0.0 && r.approx_norm == 0.0));
}

#[test]
fn sewing_bound_scales_with_interval_length() {
    let b = bundled("rough6.json");
    let path = sample_path(&HurstParams::new(0.5, 1, 14, 25).unwrap()).unwrap();
    let g = AveragedIncrements::new(&b, &path).unwrap();
    let theta = SampledPath::from_fn(path.n_grid(), 1, |u| vec![0.4 * (5.0 * u).sin()]).unwrap();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 5..=10 {
        let len = 2f64.powi(-k);
        // average over disjoint windows to damp the path's local fluctuations
        let starts = [0.125, 0.375, 0.625];
        let mean: f64 = starts
            .iter()
            .map(|s| {
                young_integral(&g, &theta, *s, s + len, 14, 1.0)
                    .unwrap()
                    .sewing_bound
            })
            .sum::<f64>()
            / starts.len() as f64;
        xs.push(len.ln());
        ys.push(mean.ln());
    }
    let (slope, _) = youngreg::stats::linear_fit(&xs, &ys);
    assert!((slope - 2.0).abs() <= 0.3, "sewing exponent {slope}");
}

#[test]
fn mismatched_partitions_respect_the_sewing_bound() {
    let b = bundled("rough6.json");
    let path = sample_path(&HurstParams::new(0.5, 1, 12, 26).unwrap()).unwrap();
    let g = AveragedIncrements::new(&b, &path).unwrap();
    let theta = sample_path(&HurstParams::new(0.8, 1, 12, 27).unwrap()).unwrap();
    for (s, u, t) in [(0.0, 0.5, 1.0), (0.25, 0.375, 0.75)] {
        let (defect, bound) = chasles_defect_mixed(&g, &theta, (s, u, t), 8, 10, 0.75).unwrap();
        assert!(defect <= bound, "defect {defect} vs bound {bound}");
    }
}

#[test]
fn continuity_modulus_ratio_is_calibratable() {
    let b = bundled("rough6.json");
    let path = sample_path(&HurstParams::new(0.5, 1, 10, 28).unwrap()).unwrap();
    let g = AveragedIncrements::new(&b, &path).unwrap();
    let theta1 = SampledPath::from_fn(1024, 1, |u| vec![0.3 * (4.0 * u).cos()]).unwrap();
    let mut rng = rng(28);
    let mut ratios = Vec::new();
    for trial in 0..250 {
        let eps = [1e-1, 1e-3, 1e-5][trial % 3];
        let (a, k) = (rng.random_range(-1.0..1.0), rng.random_range(1.0..6.0));
        let theta2 = SampledPath::from_fn(1024, 1, |u| {
            vec![0.3 * (4.0 * u).cos() + eps * a * (k * u).sin()]
        })
        .unwrap();
        let (ka, kb) = random_interval(&mut rng, 1024);
        let rep = continuity_modulus(
            &g,
            &theta1,
            &theta2,
            ka as f64 / 1024.0,
            kb as f64 / 1024.0,
            10,
            1.0,
            1.0,
        )
        .unwrap();
        ratios.push(rep.ratio);
    }
    let c = ratios[..50].iter().copied().fold(0.0, f64::max) * 1.1;
    let ok = ratios[50..].iter().filter(|r| **r <= c).count();
    assert!(ok as f64 >= 0.95 * 200.0, "{ok} of 200 within C = {c}");
    let same = continuity_modulus(&g, &theta1, &theta1, 0.0, 1.0, 10, 1.0, 1.0).unwrap();
    assert_eq!(same.difference, 0.0);
}

#[test]
fn holder_norm_scaling_of_fbm() {
    let h = 0.5;
    let fine = sample_path(&HurstParams::new(h, 1, 14, 29).unwrap()).unwrap();
    let coarse = fine.coarsen(1).unwrap();
    let below = (
        holder_norm(&fine, h - 0.05, 0.0, 1.0).unwrap(),
        holder_norm(&coarse, h - 0.05, 0.0, 1.0).unwrap(),
    );
    assert!((below.0 - below.1).abs() / below.1 <= 0.15, "{below:?}");
    let coarser = fine.coarsen(4).unwrap();
    let above = (
        holder_norm(&fine, h + 0.05, 0.0, 1.0).unwrap(),
        holder_norm(&coarser, h + 0.05, 0.0, 1.0).unwrap(),
    );
    assert!(above.0 / above.1 >= 2f64.powf(0.04 * 4.0), "{above:?}");
    let line = SampledPath::from_fn(64, 1, |u| vec![u]).unwrap();
    assert!((holder_norm(&line, 1.0, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn s_grows_with_the_lattice_and_q_is_stable_under_refinement() {
    let paths = sample_ensemble(&HurstParams::new(0.5, 1, 10, 30).unwrap(), 0, 20).unwrap();
    let lambda = 0.2;
    let mut worst_q: f64 = 0.0;
    for p in &paths {
        let base = Truncation::new(5, 1, 4.0, 4.0);
        let wide = Truncation::new(5, 1, 8.0, 8.0);
        let refined = Truncation::new(10, 1, 8.0, 8.0);
        let s = |tr| log_s_lambda(&StreamingDyadic::new(p, tr).unwrap(), lambda, 0.5).unwrap();
        let (s_base, s_wide, s_ref) = (s(base), s(wide), s(refined));
        assert!(s_wide >= s_base);
        let lr = log_r_lambda(p, lambda).unwrap();
        let (q0, q1) = (q_from_logs(lr, s_base), q_from_logs(lr, s_ref));
        worst_q = worst_q.max((q1 - q0).abs() / q0);
    }
    assert!(worst_q <= 0.1, "relative Q change {worst_q}");
}

#[test]
fn r_lambda_monte_carlo_respects_the_gaussian_bound() {
    let lambda = 0.2;
    let paths = sample_ensemble(&HurstParams::new(0.5, 1, 10, 31).unwrap(), 0, 2000).unwrap();
    let rs: Vec<f64> = paths
        .iter()
        .map(|p| log_r_lambda(p, lambda).unwrap().exp())
        .collect();
    let est = McEstimate::from_samples(&rs, 31).unwrap();
    let bound = (1.0 - 2.0 * lambda).powf(-1.0 / (2.0 * lambda));
    assert!(
        est.mean <= bound * (1.0 + 4.0 * est.se),
        "mean {} +- {} vs {bound}",
        est.mean,
        est.se
    );
}

#[test]
fn second_moment_is_below_the_pathwise_bound() {
    for h in [0.3, 0.7] {
        let setup = MomentSetup {
            hurst: h,
            dim: 1,
            omega: 1.0,
            xi: vec![3.0],
            s: 0.25,
            t: 0.75,
            depth: 9,
            seed: 32,
        };
        let rep = moment_check(&setup, 1, 500).unwrap();
        assert!(rep.estimate.mean <= rep.pathwise_bound + 3.0 * rep.estimate.se);
        assert!(rep.exact.is_none());
    }
}

#[test]
fn averaging_constant_is_monotone_in_alpha_and_stable_in_depth() {
    let paths = sample_ensemble(&HurstParams::new(0.5, 1, 10, 33).unwrap(), 0, 10).unwrap();
    let (alpha, gamma) = (-0.8, 0.525);
    let k = |p: &SampledPath, tr: Truncation, a: f64| {
        estimate_averaging_constant(&StreamingDyadic::new(p, tr).unwrap(), a, gamma).k
    };
    let tr8 = Truncation::new(8, 1, 8.0, 8.0);
    let tr10 = Truncation::new(10, 1, 8.0, 8.0);
    let mut max8: f64 = 0.0;
    let mut max10: f64 = 0.0;
    for p in &paths {
        assert!(k(p, tr8, alpha + 0.3) <= k(p, tr8, alpha));
        max8 = max8.max(k(p, tr8, alpha));
        max10 = max10.max(k(p, tr10, alpha));
    }
    assert!(
        max10 >= max8 && (max10 - max8) / max8 < 0.2,
        "{max8} -> {max10}"
    );
}

#[test]
fn perturbation_lemma_constant_is_stable() {
    let (alpha, gamma) = (-0.6, 0.55);
    let tr = Truncation::new(8, 0, 8.0, 8.0);
    let w = sample_path(&HurstParams::new(0.5, 1, 10, 34).unwrap()).unwrap();
    let kw = estimate_averaging_constant(&StreamingDyadic::new(&w, tr).unwrap(), alpha, gamma).k;
    let mut rng = rng(34);
    let ratios: Vec<f64> = (0..20)
        .map(|_| {
            let (a, f) = (rng.random_range(0.1..2.0), rng.random_range(1.0..8.0));
            let theta = SampledPath::from_fn(1024, 1, |u| vec![a * (f * u).sin()]).unwrap();
            let lip = a * f;
            let shifted = w.add(&theta).unwrap();
            let k = estimate_averaging_constant(
                &StreamingDyadic::new(&shifted, tr).unwrap(),
                alpha + gamma,
                gamma,
            )
            .k;
            k / (kw * (1.0 + lip.powf(gamma)))
        })
        .collect();
    let c = ratios[..10].iter().copied().fold(0.0, f64::max) * 1.1;
    let violations = ratios[10..].iter().filter(|r| **r > c).count();
    assert!(violations <= 1, "ratios {ratios:?}");
}

#[test]
fn table_entries_match_direct_evaluation() {
    let path = sample_path(&HurstParams::new(0.4, 1, 8, 35).unwrap()).unwrap();
    let table = build_dyadic_table(&path, Truncation::new(6, 1, 3.0, 3.0), 1 << 22).unwrap();
    let mut rng = rng(35);
    for _ in 0..20 {
        let n = rng.random_range(0..=6u32);
        let k = rng.random_range(0..1usize << n);
        let point = rng.random_range(0..table.points().len());
        let f = &table.points()[point].freq;
        let len = 2f64.powi(-(n as i32));
        let direct = youngreg::oscillatory::eval_y(&path, k as f64 * len, (k + 1) as f64 * len, f)
            .unwrap()
            .value;
        assert!((table.get(n, k, point).value - direct).norm() <= 1e-12);
    }
}
