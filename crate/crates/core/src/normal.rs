//! Standard normal density, distribution and quantile functions.
//!
//! `cdf` is built on the complementary error function so that both tails
//! keep full relative accuracy. `quantile` starts from a low-order rational
//! approximation and polishes it with Halley steps against `cdf`, which
//! makes its accuracy that of `cdf` itself.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Natural log of the standard normal density.
#[inline]
pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

/// Standard normal cumulative distribution function Φ.
#[inline]
pub fn cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate for large positive `x`.
#[inline]
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// ln Φ(x), accurate in both tails.
pub fn ln_cdf(x: f64) -> f64 {
    if x > -37.0 {
        let c = cdf(x);
        if c > 0.5 {
            (-sf(x)).ln_1p()
        } else {
            c.ln()
        }
    } else {
        // Mills-ratio asymptotic series; eight terms leave a truncation error
        // below 1e-19 for x <= -37.
        let z = 1.0 / (x * x);
        let mut term = 1.0;
        let mut series = 1.0;
        for k in 1..8 {
            term *= -((2 * k - 1) as f64) * z;
            series += term;
        }
        ln_pdf(x) - (-x).ln() + series.ln()
    }
}

/// Standard normal quantile Φ⁻¹(p). Returns ∓∞ at p = 0 and p = 1 and NaN
/// outside [0, 1].
pub fn quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        // Φ⁻¹(p) = −Φ⁻¹(1 − p); 1 − p is exact for p in (0.5, 1).
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

/// Quantile for p in (0, 0.5].
fn lower_quantile(p: f64) -> f64 {
    // Abramowitz & Stegun 26.2.23, |error| < 4.5e-4.
    let t = (-2.0 * p.ln()).sqrt();
    let num = 2.515_517 + t * (0.802_853 + t * 0.010_328);
    let den = 1.0 + t * (1.432_788 + t * (0.189_269 + t * 0.001_308));
    let mut x = -(t - num / den);

    let ln_p = p.ln();
    for _ in 0..50 {
        // Halley step on Φ(x) − p. In the far tail the residual is formed in
        // log space to avoid underflowing φ(x).
        let step = if x > -37.0 {
            let r = (cdf(x) - p) / pdf(x);
            r / (1.0 + 0.5 * x * r)
        } else {
            let d = ln_cdf(x) - ln_p;
            let r = -(-d).exp_m1() * (ln_cdf(x) - ln_pdf(x)).exp();
            r / (1.0 + 0.5 * x * r)
        };
        x -= step;
        if step.abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            break;
        }
    }
    x
}
