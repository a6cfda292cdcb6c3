//! Time-monotone forward utilities generated by a finite Dirac mixture
//! μ = Σ mᵢ δ_{yᵢ}.
//!
//! With h(z, t) = Σ mᵢ exp(z·yᵢ − yᵢ²t/2) and ζ = h⁻¹(x, t), the value
//! function solving v_t = ½ v_x²/v_xx is
//!
//! ```text
//! v(x, t) = Σ_{yᵢ≠1} mᵢyᵢ/(yᵢ−1) · exp((yᵢ−1)ζ − (yᵢ²−1)t/2) + Σ_{yᵢ=1} mᵢ(ζ − t)
//! ```
//!
//! which at t = 0 is the antiderivative of e^{−h⁻¹(x,0)} without an additive
//! constant. [`v_eval_quadrature`] evaluates the same function from its time
//! derivative v_t = −½ e^{−ζ+t/2} h_x(ζ, t) as an independent route.

use crate::distortion::WangForward;
use crate::error::{Error, Result};
use crate::market::{CumulatedRisk, KernelLaw, MarketCurve};
use crate::quadrature;
use crate::utility::Utility;
use serde::{Deserialize, Serialize};

/// Residual target for h⁻¹, relative to max(1, x).
pub const INVERSE_TOLERANCE: f64 = 1e-12;
/// Absolute tolerance of the time integral in [`v_eval_quadrature`].
pub const TIME_INTEGRAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub y: f64,
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiracMixture {
    // sorted by y
    atoms: Vec<Atom>,
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

impl DiracMixture {
    pub fn new(mut atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Spec("mixture needs at least one atom".into()));
        }
        for a in &atoms {
            if !(a.y > 0.0 && a.m > 0.0) || !a.y.is_finite() || !a.m.is_finite() {
                return Err(Error::Spec(format!(
                    "atoms need finite positive location and mass, got y={}, m={}",
                    a.y, a.m
                )));
            }
        }
        atoms.sort_by(|a, b| a.y.total_cmp(&b.y));
        if atoms.windows(2).any(|w| w[0].y == w[1].y) {
            return Err(Error::Spec("atom locations must be distinct".into()));
        }
        Ok(Self { atoms })
    }

    /// δ_{1/α}: the power utility x^{1−α}/(1−α) at t = 0.
    pub fn crra(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Spec(format!("relative risk aversion must be > 0, got {alpha}")));
        }
        Self::new(vec![Atom { y: 1.0 / alpha, m: 1.0 }])
    }

    /// δ₁: logarithmic utility.
    pub fn log() -> Self {
        Self {
            atoms: vec![Atom { y: 1.0, m: 1.0 }],
        }
    }

    /// δ_{1/(1−θ)} + δ_{2/(1−θ)} for 0 < θ < 1.
    pub fn two_dirac(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Spec(format!("two-Dirac mixture needs 0 < theta < 1, got {theta}")));
        }
        let y = 1.0 / (1.0 - theta);
        Self::new(vec![Atom { y, m: 1.0 }, Atom { y: 2.0 * y, m: 1.0 }])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// ln h(z, t).
    pub fn ln_h(&self, z: f64, t: f64) -> f64 {
        log_sum_exp(self.atoms.iter().map(|a| a.m.ln() + a.y * z - 0.5 * a.y * a.y * t))
    }

    /// ln h_x(z, t).
    pub fn ln_h_x(&self, z: f64, t: f64) -> f64 {
        log_sum_exp(self.atoms.iter().map(|a| (a.m * a.y).ln() + a.y * z - 0.5 * a.y * a.y * t))
    }

    /// h(z, t); errors when the value leaves the floating-point range.
    pub fn h(&self, z: f64, t: f64) -> Result<f64> {
        let ln = self.ln_h(z, t);
        let v = ln.exp();
        if !v.is_finite() || v == 0.0 {
            return Err(Error::Overflow(format!("h({z}, {t}) = exp({ln}) is out of range")));
        }
        Ok(v)
    }

    /// ∂h/∂z.
    pub fn h_x(&self, z: f64, t: f64) -> Result<f64> {
        let ln = self.ln_h_x(z, t);
        let v = ln.exp();
        if !v.is_finite() || v == 0.0 {
            return Err(Error::Overflow(format!("h_x({z}, {t}) = exp({ln}) is out of range")));
        }
        Ok(v)
    }

    /// The z solving h(z, t) = x: safeguarded Newton on ln h − ln x, which is
    /// increasing and convex in z.
    pub fn h_inverse(&self, x: f64, t: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::domain(format!("h_inverse needs finite x > 0, got {x}")));
        }
        if !(t >= 0.0) {
            return Err(Error::domain(format!("time must be >= 0, got {t}")));
        }
        let ln_x = x.ln();
        // Each term is below h, and h is below x once every term is below x/K.
        let k = self.atoms.len() as f64;
        let bound = |shift: f64| {
            self.atoms
                .iter()
                .map(|a| (ln_x - shift - a.m.ln() + 0.5 * a.y * a.y * t) / a.y)
                .fold(f64::INFINITY, f64::min)
        };
        let mut hi = bound(0.0);
        let mut lo = bound(k.ln());
        if self.atoms.len() == 1 {
            return Ok(hi);
        }
        // From the right end Newton on a convex increasing function moves
        // monotonically towards the root.
        let mut z = hi;
        for _ in 0..200 {
            let g = self.ln_h(z, t) - ln_x;
            if g > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let slope = (self.ln_h_x(z, t) - self.ln_h(z, t)).exp();
            let mut next = z - g / slope;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let done = (next - z).abs() <= 2.0 * f64::EPSILON * z.abs().max(1.0);
            z = next;
            if done || hi - lo <= 2.0 * f64::EPSILON * z.abs().max(1.0) {
                break;
            }
        }
        Ok(z)
    }

    /// v(x, t), in closed form.
    pub fn v(&self, x: f64, t: f64) -> Result<f64> {
        let zeta = self.h_inverse(x, t)?;
        Ok(self.v_at(zeta, t))
    }

    fn v_at(&self, zeta: f64, t: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| {
                if a.y == 1.0 {
                    a.m * (zeta - t)
                } else {
                    a.m * a.y / (a.y - 1.0) * ((a.y - 1.0) * zeta - 0.5 * (a.y * a.y - 1.0) * t).exp()
                }
            })
            .sum()
    }

    /// v_x(x, t) = exp(−h⁻¹(x, t) + t/2).
    pub fn v_x(&self, x: f64, t: f64) -> Result<f64> {
        Ok((-self.h_inverse(x, t)? + 0.5 * t).exp())
    }

    /// v_xx(x, t) = −v_x / h_x(h⁻¹(x, t), t).
    pub fn v_xx(&self, x: f64, t: f64) -> Result<f64> {
        let zeta = self.h_inverse(x, t)?;
        Ok(-(-zeta + 0.5 * t - self.ln_h_x(zeta, t)).exp())
    }
}

/// h(z, t) for the mixture.
pub fn h_eval(mix: &DiracMixture, z: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be >= 0, got {t}")));
    }
    mix.h(z, t)
}

/// Spatial inverse of h.
pub fn h_inverse(mix: &DiracMixture, x: f64, t: f64) -> Result<f64> {
    mix.h_inverse(x, t)
}

/// v(x, t).
pub fn v_eval(mix: &DiracMixture, x: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be >= 0, got {t}")));
    }
    mix.v(x, t)
}

/// v(x, t) as v(x, 0) − ½∫₀ᵗ e^{−h⁻¹(x,s)+s/2} h_x(h⁻¹(x,s), s) ds, with the
/// time integral by adaptive Simpson.
pub fn v_eval_quadrature(mix: &DiracMixture, x: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be >= 0, got {t}")));
    }
    let start = mix.v(x, 0.0)?;
    let failed = std::cell::Cell::new(None);
    let integrand = |s: f64| match mix.h_inverse(x, s) {
        Ok(z) => (-z + 0.5 * s + mix.ln_h_x(z, s)).exp(),
        Err(e) => {
            failed.set(Some(e));
            f64::NAN
        }
    };
    let drift = quadrature::adaptive_simpson(integrand, 0.0, t, TIME_INTEGRAL_TOLERANCE);
    if let Some(e) = failed.take() {
        return Err(e);
    }
    Ok(start - 0.5 * drift?)
}

/// A mixture-generated utility frozen at internal time τ.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureUtility {
    mixture: DiracMixture,
    tau: f64,
}

impl MixtureUtility {
    pub fn new(mixture: DiracMixture, tau: f64) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::domain(format!("internal time must be finite and >= 0, got {tau}")));
        }
        Ok(Self { mixture, tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn second(&self, x: f64) -> f64 {
        self.mixture.v_xx(x, self.tau).unwrap_or(f64::NAN)
    }
}

impl Utility for MixtureUtility {
    fn value(&self, x: f64) -> f64 {
        if x == 0.0 {
            // limit of v(x, τ) as x ↓ 0
            return if self.mixture.atoms[0].y <= 1.0 { f64::NEG_INFINITY } else { 0.0 };
        }
        self.mixture.v(x, self.tau).unwrap_or(f64::NAN)
    }

    fn marginal(&self, x: f64) -> f64 {
        self.mixture.v_x(x, self.tau).unwrap_or(f64::NAN)
    }

    fn marginal_inverse(&self, y: f64) -> f64 {
        self.mixture.h(0.5 * self.tau - y.ln(), self.tau).unwrap_or(f64::NAN)
    }

    fn inverse(&self, v: f64) -> Result<f64> {
        // v(·, τ) is increasing in ζ, and ζ ↦ h(ζ, τ) is explicit
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        let mut expand = 0;
        while self.mixture.v_at(lo, self.tau) > v {
            lo *= 2.0;
            expand += 1;
            if expand > 60 {
                return Err(Error::domain(format!("utility level {v} is below the utility range")));
            }
        }
        while self.mixture.v_at(hi, self.tau) < v {
            hi *= 2.0;
            expand += 1;
            if expand > 120 {
                return Err(Error::domain(format!("utility level {v} is above the utility range")));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.mixture.v_at(mid, self.tau) < v {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
        }
        self.mixture.h(0.5 * (lo + hi), self.tau)
    }
}

/// A distortion parameter γ, a mixture and a market: the forward utility
/// u_t(x) = v(x, γ²A_{0,t}) with the forward Wang distortions w_{s,t}.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPair {
    gamma: f64,
    mixture: DiracMixture,
    market: MarketCurve,
}

impl ForwardPair {
    pub fn new(gamma: f64, mixture: DiracMixture, market: MarketCurve) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::domain(format!("distortion parameter must be >= 0, got {gamma}")));
        }
        Ok(Self { gamma, mixture, market })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mixture(&self) -> &DiracMixture {
        &self.mixture
    }

    pub fn market(&self) -> &MarketCurve {
        &self.market
    }

    pub fn is_degenerate(&self) -> bool {
        self.gamma == 0.0
    }

    /// Internal time γ²A_{0,t} of the utility at calendar time t.
    pub fn internal_time(&self, t: f64) -> Result<f64> {
        Ok(self.gamma * self.gamma * self.market.accumulate_risk(0.0, t)?)
    }

    pub fn utility_at(&self, t: f64) -> Result<MixtureUtility> {
        MixtureUtility::new(self.mixture.clone(), self.internal_time(t)?)
    }

    /// Law of ρ_{s,t}.
    pub fn kernel_law(&self, s: f64, t: f64) -> Result<KernelLaw> {
        KernelLaw::between(&self.market, s, t)
    }

    /// w_{s,t}.
    pub fn distortion(&self, s: f64, t: f64) -> Result<WangForward> {
        WangForward::new(self.gamma, self.kernel_law(s, t)?)
    }

    /// X*_t given X*_0 = x0 and the stochastic integral m = ∫₀ᵗ λ'dW.
    pub fn optimal_wealth(&self, t: f64, x0: f64, m: f64) -> Result<f64> {
        if self.is_degenerate() {
            return Ok(x0);
        }
        let a = self.market.accumulate_risk(0.0, t)?;
        let z = self.mixture.h_inverse(x0, 0.0)? + self.gamma * a + self.gamma * m;
        self.mixture.h(z, self.gamma * self.gamma * a)
    }

    /// π*_t given X*_0 = x0 and m = ∫₀ᵗ λ'dW.
    pub fn optimal_strategy(&self, t: f64, x0: f64, m: f64) -> Result<Vec<f64>> {
        let seg = self.market.segment_at(t)?;
        if self.is_degenerate() {
            return Ok(vec![0.0; seg.risky_direction().len()]);
        }
        let a = self.market.accumulate_risk(0.0, t)?;
        let z = self.mixture.h_inverse(x0, 0.0)? + self.gamma * a + self.gamma * m;
        let scale = self.gamma * self.mixture.h_x(z, self.gamma * self.gamma * a)?;
        Ok(seg.risky_direction().iter().map(|d| scale * d).collect())
    }

    /// The optimal strategy as a function of current wealth.
    pub fn feedback_strategy(&self, t: f64, wealth: f64) -> Result<Vec<f64>> {
        let seg = self.market.segment_at(t)?;
        if self.is_degenerate() {
            return Ok(vec![0.0; seg.risky_direction().len()]);
        }
        let tau = self.internal_time(t)?;
        let z = self.mixture.h_inverse(wealth, tau)?;
        let scale = self.gamma * self.mixture.h_x(z, tau)?;
        Ok(seg.risky_direction().iter().map(|d| scale * d).collect())
    }

    /// X*_t from X*_s = xs and a kernel increment ρ_{s,t}:
    /// (u'_t)⁻¹(u'_s(xs)·E[ρ^{1−γ}]·ρ^γ).
    pub fn conditional_optimal_wealth(&self, s: f64, t: f64, xs: f64, rho: f64) -> Result<f64> {
        if self.is_degenerate() {
            return Ok(xs);
        }
        let law = self.kernel_law(s, t)?;
        let us = self.utility_at(s)?;
        let ut = self.utility_at(t)?;
        let y = (us.marginal(xs).ln() + law.ln_power_mean(1.0 - self.gamma) + self.gamma * rho.ln()).exp();
        let x = ut.marginal_inverse(y);
        if !x.is_finite() {
            return Err(Error::Overflow(format!("optimal wealth overflowed at rho={rho}")));
        }
        Ok(x)
    }
}

/// u_t(x).
pub fn forward_u(pair: &ForwardPair, t: f64, x: f64) -> Result<f64> {
    pair.mixture.v(x, pair.internal_time(t)?)
}

/// u'_t(x).
pub fn forward_u_prime(pair: &ForwardPair, t: f64, x: f64) -> Result<f64> {
    pair.mixture.v_x(x, pair.internal_time(t)?)
}

/// (u'_t)⁻¹(y).
pub fn forward_u_prime_inverse(pair: &ForwardPair, t: f64, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return Err(Error::domain(format!("marginal utility must be > 0, got {y}")));
    }
    let tau = pair.internal_time(t)?;
    pair.mixture.h(0.5 * tau - y.ln(), tau)
}

/// JSON form: `{ "atoms": [ { "y": 2.0, "m": 1.0 } ] }`, `{ "crra": { "alpha": 2.0 } }`,
/// `{ "log": {} }` or `{ "two_dirac": { "theta": 0.5 } }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureSpec {
    Atoms(Vec<Atom>),
    Crra { alpha: f64 },
    Log {},
    TwoDirac { theta: f64 },
}

impl MixtureSpec {
    pub fn build(&self) -> Result<DiracMixture> {
        match self {
            MixtureSpec::Atoms(a) => DiracMixture::new(a.clone()),
            MixtureSpec::Crra { alpha } => DiracMixture::crra(*alpha),
            MixtureSpec::Log {} => Ok(DiracMixture::log()),
            MixtureSpec::TwoDirac { theta } => DiracMixture::two_dirac(*theta),
        }
    }
}
