//! Property tests for the algebraic invariants of the library.

mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use youngreg::averaging::averaged_field;
use youngreg::fbm::{fbm_covariance, local_nondeterminism_gap, sample_path, HurstParams};
use youngreg::mollify::{mollifier, mollify};
use youngreg::oscillatory::{eval_y, lipschitz_gap, Frequency};
use youngreg::stats::{log_r_lambda, q_lambda};
use youngreg::young::{chasles_defect, young_integral, FieldExponents, PotentialField};
use youngreg::{Atom, FourierVectorField, SampledPath};

const N: usize = 64;

fn path_strategy(dim: usize) -> impl Strategy<Value = SampledPath> {
    prop::collection::vec(-0.3f64..0.3, N * dim).prop_map(move |steps| {
        let mut values = vec![0.0; (N + 1) * dim];
        for k in 0..N {
            for c in 0..dim {
                values[(k + 1) * dim + c] = values[k * dim + c] + steps[k * dim + c];
            }
        }
        SampledPath::new(N, dim, values).unwrap()
    })
}

fn interval() -> impl Strategy<Value = (usize, usize, usize)> {
    (0..N - 1, 1..N, 1..N).prop_filter_map("ordered triple", |(a, b, c)| {
        let mut v = [a, b, c];
        v.sort();
        (v[0] < v[1] && v[1] < v[2]).then_some((v[0], v[1], v[2]))
    })
}

fn atom(dim: usize) -> impl Strategy<Value = Atom> {
    (
        -6.0f64..6.0,
        prop::collection::vec(-6.0f64..6.0, dim),
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim),
    )
        .prop_map(|(w, xi, c)| {
            Atom::new(
                w,
                xi,
                c.into_iter().map(|(a, b)| Complex64::new(a, b)).collect(),
            )
        })
}

fn field(dim: usize) -> impl Strategy<Value = FourierVectorField> {
    prop::collection::vec(atom(dim), 1..4)
        .prop_map(move |a| FourierVectorField::with_conjugates(dim, a).unwrap())
}

fn t(k: usize) -> f64 {
    k as f64 / N as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn y_is_additive_bounded_and_conjugation_symmetric(
        p in path_strategy(2),
        (a, b, c) in interval(),
        w in -30.0f64..30.0,
        xi in prop::collection::vec(-30.0f64..30.0, 2),
    ) {
        let f = Frequency::new(w, xi).unwrap();
        let whole = eval_y(&p, t(a), t(c), &f).unwrap().value;
        let left = eval_y(&p, t(a), t(b), &f).unwrap().value;
        let right = eval_y(&p, t(b), t(c), &f).unwrap().value;
        prop_assert!((whole - left - right).norm() <= 1e-12);
        prop_assert!(whole.norm() <= (t(c) - t(a)) * (1.0 + 1e-15));
        let mirrored = eval_y(&p, t(a), t(c), &f.neg()).unwrap().value;
        prop_assert!((mirrored - whole.conj()).norm() <= 1e-14);
    }

    #[test]
    fn lipschitz_gap_is_nonnegative(
        p in path_strategy(1),
        (a, _, c) in interval(),
        (w1, x1, w2, x2) in (-20.0f64..20.0, -20.0f64..20.0, -20.0f64..20.0, -20.0f64..20.0),
    ) {
        let f1 = Frequency::new(w1, vec![x1]).unwrap();
        let f2 = Frequency::new(w2, vec![x2]).unwrap();
        prop_assert!(lipschitz_gap(&p, t(a), t(c), &f1, &f2).unwrap() >= -1e-12);
        prop_assert_eq!(lipschitz_gap(&p, t(a), t(c), &f1, &f1).unwrap(), 0.0);
    }

    #[test]
    fn averaged_field_is_additive_linear_and_real(
        p in path_strategy(2),
        f in field(2),
        g in field(2),
        (a, b, c) in interval(),
        x in prop::collection::vec(-2.0f64..2.0, 2),
    ) {
        let av = |h: &FourierVectorField, s: usize, e: usize| averaged_field(h, &p, t(s), t(e), &x).unwrap();
        let whole = av(&f, a, c);
        let (l, r) = (av(&f, a, b), av(&f, b, c));
        for i in 0..2 {
            prop_assert!((whole.value[i] - l.value[i] - r.value[i]).abs() <= 1e-12);
        }
        let sum = av(&f.add(&g).unwrap(), a, c);
        let g_only = av(&g, a, c);
        for i in 0..2 {
            prop_assert!((sum.value[i] - whole.value[i] - g_only.value[i]).abs() <= 1e-12);
        }
        prop_assert!(whole.imag_residual <= 1e-10 * f.coefficient_mass());
        let shifted = averaged_field(&f.translate(&x), &p, t(a), t(c), &[0.0, 0.0]).unwrap();
        for i in 0..2 {
            prop_assert!((shifted.value[i] - whole.value[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn translation_interpolation_inequality(
        f in field(2),
        x in prop::collection::vec(-2.0f64..2.0, 2),
        y in prop::collection::vec(-2.0f64..2.0, 2),
        alpha in -1.0f64..1.0,
        theta_idx in 0usize..3,
    ) {
        // N_alpha(tau_x f - tau_y f) <= 2^{1-theta} N_{alpha+theta}(f) |x-y|^theta
        let theta = [0.0, 0.5, 1.0][theta_idx];
        let lhs = f.translate(&x).sub(&f.translate(&y)).unwrap().n_alpha_norm(alpha);
        let dist = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        let rhs = 2f64.powf(1.0 - theta) * f.n_alpha_norm(alpha + theta) * dist.powf(theta);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn four_point_lemma_with_unit_constant(
        f in field(1),
        pts in prop::collection::vec(-2.0f64..2.0, 4),
        alpha in -1.0f64..1.0,
    ) {
        let (x1, y1, x2, y2) = (&pts[0..1], &pts[1..2], &pts[2..3], &pts[3..4]);
        let lhs = f.four_point_norm(x1, y1, x2, y2, alpha);
        let (a, b, c, d) = (pts[0], pts[1], pts[2], pts[3]);
        let bracket = ((a - b) - (c - d)).abs() * (1.0 + (b - d).abs() + (c - d).abs()) + (b - d).abs() * (c - d).abs();
        prop_assert!(lhs <= f.n_alpha_norm(alpha + 2.0) * bracket * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn mollifiers_contract_and_converge(f in field(2), alpha in -1.0f64..0.9, n in 1u32..32) {
        for name in ["power", "exp"] {
            let scheme = mollifier(name).unwrap();
            let fn_ = mollify(&f, n, scheme, alpha).unwrap();
            prop_assert!(fn_.n_alpha_norm(alpha) <= f.n_alpha_norm(alpha) * (1.0 + 1e-14));
            let err_n = f.sub(&fn_).unwrap().n_alpha_norm(alpha);
            let err_2n = f.sub(&mollify(&f, 2 * n, scheme, alpha).unwrap()).unwrap().n_alpha_norm(alpha);
            prop_assert!(err_2n <= err_n * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn young_integral_is_linear_in_g_and_chasles_exact(
        theta in path_strategy(1),
        (a, b, c) in interval(),
        k1 in -3.0f64..3.0,
        k2 in -3.0f64..3.0,
    ) {
        let ex = FieldExponents { nu: 1.0, vartheta: 1.0, norm_bound: 10.0 };
        let g1 = PotentialField::new(N, 1, 1, ex, move |t, x, o| o[0] = (k1 * t).sin() * x[0].cos());
        let g2 = PotentialField::new(N, 1, 1, ex, move |t, x, o| o[0] = t * (k2 * x[0]).sin());
        let g12 = PotentialField::new(N, 1, 1, ex, move |t, x, o| {
            o[0] = (k1 * t).sin() * x[0].cos() + t * (k2 * x[0]).sin()
        });
        let depth = theta.depth();
        let i = |g: &PotentialField| young_integral(g, &theta, t(a), t(c), depth, 1.0).unwrap().value[0];
        prop_assert!((i(&g12) - i(&g1) - i(&g2)).abs() <= 1e-12);
        prop_assert!(chasles_defect(&g1, &theta, t(a), t(b), t(c), depth, 1.0).unwrap() <= 1e-12);
        // G_t(x) = G_u(x) + G_{u,t}(x) additivity of the increments
        let mut s1 = [0.0];
        let mut s2 = [0.0];
        let mut s3 = [0.0];
        use youngreg::young::IncrementField;
        g1.increment(a, b, &[0.4], &mut s1);
        g1.increment(b, c, &[0.4], &mut s2);
        g1.increment(a, c, &[0.4], &mut s3);
        prop_assert!((s1[0] + s2[0] - s3[0]).abs() <= 1e-12);
    }

    #[test]
    fn r_is_at_least_one_and_q_nonnegative(p in path_strategy(2), lambda in 0.01f64..1.0, s in 0.1f64..10.0) {
        let lr = log_r_lambda(&p, lambda).unwrap();
        prop_assert!(lr >= 0.0);
        prop_assert!(q_lambda(lr.exp(), s) >= 0.0);
    }

    #[test]
    fn brownian_gap_vanishes_and_variance_scales(
        steps in prop::collection::vec(0.01f64..0.3, 1..5),
        u in prop::collection::vec(-2.0f64..2.0, 5),
        h in 0.05f64..0.95,
        tt in 0.0f64..1.0,
    ) {
        let mut times = vec![0.0];
        for s in &steps {
            let next = (times.last().unwrap() + s).min(1.0);
            if next > *times.last().unwrap() {
                times.push(next);
            }
        }
        prop_assume!(times.len() >= 2);
        let u = &u[..times.len() - 1];
        prop_assert!(local_nondeterminism_gap(0.5, &times, u, 1.0).unwrap().abs() <= 1e-12);
        prop_assert!((fbm_covariance(h, tt, tt).unwrap() - tt.powf(2.0 * h)).abs() <= 1e-15);
    }
}

#[test]
fn sampled_paths_start_at_origin() {
    for (h, seed) in [(0.3, 1), (0.5, 2), (0.8, 3)] {
        let p = sample_path(&HurstParams::new(h, 3, 7, seed).unwrap()).unwrap();
        assert!(p.value(0).iter().all(|v| *v == 0.0));
    }
}
