//! The oscillatory integral `Y_{s,t}(omega, xi) = int_s^t exp(i xi.w_u + i omega u) du`
//! evaluated exactly on the piecewise-linear interpolant of a sampled path.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::path::{dot, SampledPath};
use crate::quadrature::gl4;

/// Below this phase slope (per unit time) the segment integral uses its Taylor form.
pub const PHASE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub omega: f64,
    pub xi: Vec<f64>,
}

impl Frequency {
    pub fn new(omega: f64, xi: Vec<f64>) -> Result<Self> {
        if !omega.is_finite() || xi.iter().any(|v| !v.is_finite()) {
            return domain("frequency entries must be finite");
        }
        Ok(Self { omega, xi })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            omega: 0.0,
            xi: vec![0.0; dim],
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            omega: -self.omega,
            xi: self.xi.iter().map(|v| -v).collect(),
        }
    }

    pub fn xi_norm(&self) -> f64 {
        crate::path::euclid_norm(&self.xi)
    }
}

/// A value of `Y` with the quadrature error attached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatoryValue {
    pub value: Complex64,
    pub abs_error_bound: f64,
}

/// `int_0^h exp(i (phi0 + slope u)) du` with the second-order expansion.
pub fn segment_integral_taylor(phi0: f64, slope: f64, h: f64) -> Complex64 {
    let z = slope * h;
    Complex64::from_polar(h, phi0) * Complex64::new(1.0 - z * z / 6.0, 0.5 * z)
}

/// `int_0^h exp(i (phi0 + slope u)) du` in the form
/// `h exp(i (phi0 + z/2)) sin(z/2)/(z/2)`, `z = slope h`, which equals
/// `(exp(i phi1) - exp(i phi0)) / (i slope)` without its cancellation.
pub fn segment_integral_exact(phi0: f64, slope: f64, h: f64) -> Complex64 {
    let half = 0.5 * slope * h;
    let sinc = if half == 0.0 { 1.0 } else { half.sin() / half };
    Complex64::from_polar(h * sinc, phi0 + half)
}

#[inline]
pub fn segment_integral(phi0: f64, slope: f64, h: f64) -> Complex64 {
    if slope.abs() <= PHASE_TOL {
        segment_integral_taylor(phi0, slope, h)
    } else {
        segment_integral_exact(phi0, slope, h)
    }
}

fn check_dim(path: &SampledPath, freq: &Frequency) -> Result<()> {
    if freq.xi.len() != path.dim() {
        return domain(format!(
            "frequency has dimension {}, path has {}",
            freq.xi.len(),
            path.dim()
        ));
    }
    Ok(())
}

/// Phase `xi.w_k + omega t_k` at grid point `k`.
#[inline]
fn phase(path: &SampledPath, freq: &Frequency, k: usize) -> f64 {
    dot(&freq.xi, path.value(k)) + freq.omega * path.time(k)
}

/// Segment integrals of `Y` over every grid cell `[k/n, (k+1)/n]`.
pub fn segment_integrals(path: &SampledPath, freq: &Frequency) -> Result<Vec<Complex64>> {
    check_dim(path, freq)?;
    Ok(segment_integrals_unchecked(path, freq, 0, path.n_grid()))
}

pub(crate) fn segment_integrals_unchecked(
    path: &SampledPath,
    freq: &Frequency,
    from: usize,
    to: usize,
) -> Vec<Complex64> {
    let h = path.step();
    let mut out = Vec::with_capacity(to - from);
    let mut phi0 = phase(path, freq, from);
    for k in from..to {
        let phi1 = phase(path, freq, k + 1);
        out.push(segment_integral(phi0, (phi1 - phi0) / h, h));
        phi0 = phi1;
    }
    out
}

/// `Y_{s,t}(omega, xi)` on the interpolant; `s` and `t` must be grid points.
pub fn eval_y(path: &SampledPath, s: f64, t: f64, freq: &Frequency) -> Result<OscillatoryValue> {
    let (a, b) = path.interval(s, t)?;
    check_dim(path, freq)?;
    Ok(eval_y_indices(path, a, b, freq))
}

pub(crate) fn eval_y_indices(
    path: &SampledPath,
    a: usize,
    b: usize,
    freq: &Frequency,
) -> OscillatoryValue {
    let value = segment_integrals_unchecked(path, freq, a, b)
        .into_iter()
        .sum();
    OscillatoryValue {
        value,
        abs_error_bound: 0.0,
    }
}

/// `Z_{s,t} = int_s^t |w_u| du`, 4-point Gauss–Legendre on each side of the
/// point of closest approach to the origin within every segment.
pub fn path_abs_integral(path: &SampledPath, s: f64, t: f64) -> Result<f64> {
    let (a, b) = path.interval(s, t)?;
    let h = path.step();
    let mut total = 0.0;
    for k in a..b {
        let p0 = path.value(k);
        let p1 = path.value(k + 1);
        let dv: Vec<f64> = p0.iter().zip(p1).map(|(x, y)| y - x).collect();
        let dd = dot(&dv, &dv);
        let norm_at = |tau: f64| {
            p0.iter()
                .zip(&dv)
                .map(|(x, d)| (x + tau * d).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let split = if dd > 0.0 { -dot(p0, &dv) / dd } else { -1.0 };
        let seg = if split > 0.0 && split < 1.0 {
            gl4(0.0, split, norm_at) + gl4(split, 1.0, norm_at)
        } else {
            gl4(0.0, 1.0, norm_at)
        };
        total += h * seg;
    }
    Ok(total)
}

/// `Z_{s,t} |xi - xi'| + (t - s)|omega - omega'| - |Y(freq1) - Y(freq2)|`,
/// nonnegative by the Lipschitz bound on `Y` in the frequency variables.
pub fn lipschitz_gap(
    path: &SampledPath,
    s: f64,
    t: f64,
    f1: &Frequency,
    f2: &Frequency,
) -> Result<f64> {
    let y1 = eval_y(path, s, t, f1)?.value;
    let y2 = eval_y(path, s, t, f2)?.value;
    let z = path_abs_integral(path, s, t)?;
    let dxi = crate::path::euclid_dist(&f1.xi, &f2.xi);
    Ok(z * dxi + (t - s) * (f1.omega - f2.omega).abs() - (y1 - y2).norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_path(v: f64) -> SampledPath {
        SampledPath::new(1, 1, vec![0.0, v]).unwrap()
    }

    #[test]
    fn zero_frequency_gives_interval_length() {
        let p = SampledPath::from_fn(16, 2, |t| vec![t.sin(), -t]).unwrap();
        let y = eval_y(&p, 0.25, 0.875, &Frequency::zero(2)).unwrap();
        assert_eq!(y.value, Complex64::new(0.625, 0.0));
        assert_eq!(y.abs_error_bound, 0.0);
    }

    #[test]
    fn affine_phase_closed_form() {
        let p = linear_path(1.7);
        for (omega, xi) in [(0.3, 2.0), (-5.0, 0.1), (40.0, -3.0)] {
            let kappa: f64 = xi * 1.7 + omega;
            let f = Frequency::new(omega, vec![xi]).unwrap();
            let y = eval_y(&p, 0.0, 1.0, &f).unwrap().value;
            let exact = (Complex64::from_polar(1.0, kappa) - 1.0) / Complex64::new(0.0, kappa);
            assert!((y - exact).norm() < 1e-15, "{y} vs {exact}");
        }
    }

    #[test]
    fn branches_agree_at_threshold() {
        for h in [1.0, 0.25, 1.0 / 1024.0] {
            for phi0 in [0.0, 1.3, -7.9] {
                for slope in [PHASE_TOL, -PHASE_TOL] {
                    let a = segment_integral_taylor(phi0, slope, h);
                    let b = segment_integral_exact(phi0, slope, h);
                    assert!((a - b).norm() <= 1e-11 * b.norm());
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = linear_path(1.0);
        assert!(eval_y(&p, 0.0, 1.0, &Frequency::zero(2)).is_err());
        assert!(eval_y(&p, 1.0, 0.0, &Frequency::zero(1)).is_err());
    }

    #[test]
    fn abs_integral_of_sign_changing_segment_is_exact() {
        // w goes from -1 to 3 on one segment: int |w| = (1/4)(1/2) + (3/4)(3/2)
        let p = SampledPath::new(1, 1, vec![-1.0, 3.0]).unwrap();
        let z = path_abs_integral(&p, 0.0, 1.0).unwrap();
        assert!((z - (0.125 + 1.125)).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_gap_trivial_cases() {
        let p = SampledPath::from_fn(32, 1, |t| vec![(5.0 * t).sin()]).unwrap();
        let f = Frequency::new(2.0, vec![3.0]).unwrap();
        assert_eq!(lipschitz_gap(&p, 0.0, 1.0, &f, &f).unwrap(), 0.0);
        let g = lipschitz_gap(
            &p,
            0.0,
            1.0,
            &Frequency::zero(1),
            &Frequency::new(1.0, vec![0.0]).unwrap(),
        )
        .unwrap();
        assert!(g >= 0.0);
    }
}
