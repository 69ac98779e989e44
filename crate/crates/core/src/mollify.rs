//! Fourier multipliers that smooth a field, selectable by name.

use crate::error::{domain, Result};
use crate::field::FourierVectorField;

/// A mollification scheme: a multiplier in `[0, 1]` applied to each atom,
/// increasing to 1 as `n` grows.
pub trait Mollifier: Send + Sync {
    fn name(&self) -> &'static str;

    /// Checks the scheme's parameter restrictions.
    fn validate(&self, n: u32, alpha: f64) -> Result<()>;

    fn multiplier(&self, xi_norm: f64, n: u32, alpha: f64) -> f64;
}

/// `(n / (n + |xi|))^(1 - alpha)`, for `alpha < 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PowerMollifier;

impl Mollifier for PowerMollifier {
    fn name(&self) -> &'static str {
        "power"
    }

    fn validate(&self, n: u32, alpha: f64) -> Result<()> {
        if n == 0 {
            return domain("mollification index must be at least 1");
        }
        if !(alpha < 1.0) {
            return domain(format!("power mollifier needs alpha < 1, got {alpha}"));
        }
        Ok(())
    }

    fn multiplier(&self, xi_norm: f64, n: u32, alpha: f64) -> f64 {
        let n = n as f64;
        (n / (n + xi_norm)).powf(1.0 - alpha)
    }
}

/// `exp(-|xi| / n)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpMollifier;

impl Mollifier for ExpMollifier {
    fn name(&self) -> &'static str {
        "exp"
    }

    fn validate(&self, n: u32, _alpha: f64) -> Result<()> {
        if n == 0 {
            return domain("mollification index must be at least 1");
        }
        Ok(())
    }

    fn multiplier(&self, xi_norm: f64, n: u32, _alpha: f64) -> f64 {
        (-xi_norm / n as f64).exp()
    }
}

static REGISTRY: &[&dyn Mollifier] = &[&PowerMollifier, &ExpMollifier];

/// Looks a scheme up by name.
pub fn mollifier(name: &str) -> Option<&'static dyn Mollifier> {
    REGISTRY.iter().copied().find(|m| m.name() == name)
}

pub fn mollifier_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|m| m.name()).collect()
}

/// `b_n`: every atom rescaled by the scheme's multiplier at `|xi|`.
pub fn mollify(
    f: &FourierVectorField,
    n: u32,
    scheme: &dyn Mollifier,
    alpha: f64,
) -> Result<FourierVectorField> {
    scheme.validate(n, alpha)?;
    Ok(f.map_coefficients(|a| scheme.multiplier(a.xi_norm(), n, alpha)))
}
