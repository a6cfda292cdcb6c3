//! Utility handles: value, marginal utility and its inverse.

use crate::error::{Error, Result};

/// A strictly increasing, strictly concave utility on (0, ∞) satisfying the
/// Inada conditions.
///
/// Methods return `f64` so they can sit inside quadrature integrands;
/// implementations whose evaluation can fail numerically return NaN, which
/// every integrator in this crate reports as a numeric error.
pub trait Utility: Send + Sync {
    fn value(&self, x: f64) -> f64;

    fn marginal(&self, x: f64) -> f64;

    /// (u')⁻¹(y) for y > 0.
    fn marginal_inverse(&self, y: f64) -> f64;

    /// u⁻¹(v), by bisection on ln x unless overridden.
    fn inverse(&self, v: f64) -> Result<f64> {
        let (mut lo, mut hi) = (-700.0f64, 700.0f64);
        let (vlo, vhi) = (self.value(lo.exp()), self.value(hi.exp()));
        if !(v >= vlo && v <= vhi) {
            return Err(Error::domain(format!(
                "utility level {v} outside the numerically reachable range [{vlo}, {vhi}]"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.value(mid.exp()) < v {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * mid.abs().max(1.0) {
                break;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    }
}

/// Power utility x^{1−α}/(1−α); α = 1 is the logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crra {
    alpha: f64,
}

impl Crra {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::domain(format!("relative risk aversion must be > 0, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Utility for Crra {
    fn value(&self, x: f64) -> f64 {
        if self.alpha == 1.0 {
            x.ln()
        } else {
            x.powf(1.0 - self.alpha) / (1.0 - self.alpha)
        }
    }

    fn marginal(&self, x: f64) -> f64 {
        x.powf(-self.alpha)
    }

    fn marginal_inverse(&self, y: f64) -> f64 {
        y.powf(-1.0 / self.alpha)
    }

    fn inverse(&self, v: f64) -> Result<f64> {
        if self.alpha == 1.0 {
            return Ok(v.exp());
        }
        let base = (1.0 - self.alpha) * v;
        if !(base > 0.0) {
            return Err(Error::domain(format!("{v} is outside the range of the power utility")));
        }
        Ok(base.powf(1.0 / (1.0 - self.alpha)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Log;

impl Utility for Log {
    fn value(&self, x: f64) -> f64 {
        x.ln()
    }

    fn marginal(&self, x: f64) -> f64 {
        1.0 / x
    }

    fn marginal_inverse(&self, y: f64) -> f64 {
        1.0 / y
    }

    fn inverse(&self, v: f64) -> Result<f64> {
        Ok(v.exp())
    }
}
