//! Deterministic-coefficient market, cumulated risk and the lognormal law
//! of the pricing kernel.
//!
//! Coefficients are piecewise constant on contiguous segments covering
//! `[0, horizon]`. The interest rate is zero throughout; the drift of each
//! segment is implied by `μ = σλ`.

use crate::error::{Error, Result};
use crate::normal;
use crate::quadrature;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Largest accepted condition number of a volatility matrix.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

/// Time comparison slack for segment boundaries.
const TIME_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub t0: f64,
    pub t1: f64,
    lambda: Vec<f64>,
    sigma: DMatrix<f64>,
    lambda_norm_sq: f64,
    // (σ')⁻¹λ, the direction of every optimal risky position in this segment.
    risky_direction: Vec<f64>,
}

impl Segment {
    fn build(t0: f64, t1: f64, lambda: Vec<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = lambda.len();
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(Error::Spec(format!(
                "segment [{t0}, {t1}]: sigma must be {n}x{n}, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let svd = sigma.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if smin <= 0.0 || !(smax / smin <= MAX_CONDITION_NUMBER) {
            return Err(Error::Spec(format!(
                "segment [{t0}, {t1}]: sigma is singular or ill-conditioned (cond = {:e})",
                smax / smin
            )));
        }
        let inv = sigma
            .transpose()
            .try_inverse()
            .ok_or_else(|| Error::Spec(format!("segment [{t0}, {t1}]: sigma is not invertible")))?;
        let dir = &inv * DVector::from_column_slice(&lambda);
        let lambda_norm_sq = lambda.iter().map(|l| l * l).sum();
        Ok(Self {
            t0,
            t1,
            lambda,
            sigma,
            lambda_norm_sq,
            risky_direction: dir.iter().copied().collect(),
        })
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// ‖λ‖² on this segment.
    pub fn lambda_norm_sq(&self) -> f64 {
        self.lambda_norm_sq
    }

    /// Position direction d with σ'd = λ, so that a holding c·d has
    /// diffusion loading c·λ' in the wealth equation. Equals σ⁻¹λ when σ is
    /// symmetric.
    pub fn risky_direction(&self) -> &[f64] {
        &self.risky_direction
    }

    /// Drift vector μ = σλ.
    pub fn drift(&self) -> Vec<f64> {
        (&self.sigma * DVector::from_column_slice(&self.lambda)).iter().copied().collect()
    }

    fn scaled(&self, gamma: f64) -> Self {
        Self {
            t0: self.t0,
            t1: self.t1,
            lambda: self.lambda.iter().map(|l| gamma * l).collect(),
            sigma: self.sigma.clone(),
            lambda_norm_sq: gamma * gamma * self.lambda_norm_sq,
            risky_direction: self.risky_direction.iter().map(|d| gamma * d).collect(),
        }
    }
}

/// Anything that can report the cumulated squared market price of risk
/// A_{s,t} = ∫ₛᵗ ‖λᵣ‖² dr.
pub trait CumulatedRisk {
    fn accumulate_risk(&self, s: f64, t: f64) -> Result<f64>;
}

/// Piecewise-constant market coefficients on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketCurve {
    horizon: f64,
    n_assets: usize,
    segments: Vec<Segment>,
}

impl MarketCurve {
    /// Builds a curve from `(t0, t1, λ, σ)` segments. Segments must be
    /// contiguous from 0 to the horizon, λ must be component-wise positive
    /// and every σ invertible.
    pub fn new(horizon: f64, segments: Vec<(f64, f64, Vec<f64>, DMatrix<f64>)>) -> Result<Self> {
        let curve = Self::build(horizon, segments)?;
        for seg in &curve.segments {
            if seg.lambda.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::Spec(format!(
                    "segment [{}, {}]: market price of risk must be component-wise positive",
                    seg.t0, seg.t1
                )));
            }
        }
        Ok(curve)
    }

    /// Single-asset market with constant λ and σ on `[0, horizon]`.
    pub fn constant_scalar(lambda: f64, sigma: f64, horizon: f64) -> Result<Self> {
        Self::new(
            horizon,
            vec![(0.0, horizon, vec![lambda], DMatrix::from_element(1, 1, sigma))],
        )
    }

    fn build(horizon: f64, segments: Vec<(f64, f64, Vec<f64>, DMatrix<f64>)>) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Spec(format!("horizon must be positive, got {horizon}")));
        }
        if segments.is_empty() {
            return Err(Error::Spec("market needs at least one segment".into()));
        }
        let n_assets = segments[0].2.len();
        if n_assets == 0 {
            return Err(Error::Spec("market needs at least one risky asset".into()));
        }
        let mut built = Vec::with_capacity(segments.len());
        let mut expected_start = 0.0;
        for (t0, t1, lambda, sigma) in segments {
            if (t0 - expected_start).abs() > TIME_EPS {
                return Err(Error::Spec(format!(
                    "segments must be contiguous: expected start {expected_start}, got {t0}"
                )));
            }
            if !(t1 > t0) {
                return Err(Error::Spec(format!("segment [{t0}, {t1}] is empty or reversed")));
            }
            if lambda.len() != n_assets {
                return Err(Error::Spec(format!(
                    "segment [{t0}, {t1}] has {} assets, expected {n_assets}",
                    lambda.len()
                )));
            }
            if lambda.iter().any(|l| !l.is_finite()) {
                return Err(Error::Spec(format!("segment [{t0}, {t1}]: non-finite lambda")));
            }
            built.push(Segment::build(expected_start, t1, lambda, sigma)?);
            expected_start = t1;
        }
        if (expected_start - horizon).abs() > TIME_EPS {
            return Err(Error::Spec(format!(
                "segments end at {expected_start} but the horizon is {horizon}"
            )));
        }
        if let Some(last) = built.last_mut() {
            last.t1 = horizon;
        }
        Ok(Self {
            horizon,
            n_assets,
            segments: built,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Interior segment boundaries and the endpoints 0 and horizon.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        b.extend(self.segments.iter().map(|s| s.t1));
        b
    }

    /// Segment governing `[t, t + dt)`; the horizon maps to the last segment.
    pub fn segment_at(&self, t: f64) -> Result<&Segment> {
        if !(t >= -TIME_EPS && t <= self.horizon + TIME_EPS) {
            return Err(Error::domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        let idx = self
            .segments
            .partition_point(|s| s.t1 <= t + TIME_EPS)
            .min(self.segments.len() - 1);
        Ok(&self.segments[idx])
    }

    /// Multiplies the market price of risk by `gamma` on every segment.
    /// Used for the γ-distorted market, where γ = 0 is legitimate.
    pub(crate) fn scaled(&self, gamma: f64) -> Self {
        Self {
            horizon: self.horizon,
            n_assets: self.n_assets,
            segments: self.segments.iter().map(|s| s.scaled(gamma)).collect(),
        }
    }
}

impl CumulatedRisk for MarketCurve {
    fn accumulate_risk(&self, s: f64, t: f64) -> Result<f64> {
        if !(s <= t) {
            return Err(Error::domain(format!("accumulate_risk needs s <= t, got s={s}, t={t}")));
        }
        if s < -TIME_EPS || t > self.horizon + TIME_EPS {
            return Err(Error::domain(format!(
                "[{s}, {t}] is not covered by the market segments [0, {}]",
                self.horizon
            )));
        }
        Ok(self
            .segments
            .iter()
            .map(|seg| {
                let overlap = (seg.t1.min(t) - seg.t0.max(s)).max(0.0);
                seg.lambda_norm_sq * overlap
            })
            .sum())
    }
}

/// Market price of risk given as a smooth function of time. The cumulated
/// risk is integrated by adaptive Simpson.
pub struct SmoothRiskCurve<F> {
    lambda_norm_sq: F,
    horizon: f64,
}

/// Absolute tolerance for integrating smooth risk curves.
pub const SMOOTH_RISK_TOLERANCE: f64 = 1e-10;

impl<F: Fn(f64) -> f64> SmoothRiskCurve<F> {
    /// `lambda_norm_sq(t)` must return ‖λₜ‖².
    pub fn new(lambda_norm_sq: F, horizon: f64) -> Self {
        Self {
            lambda_norm_sq,
            horizon,
        }
    }
}

impl<F: Fn(f64) -> f64> CumulatedRisk for SmoothRiskCurve<F> {
    fn accumulate_risk(&self, s: f64, t: f64) -> Result<f64> {
        if !(s <= t) || s < 0.0 || t > self.horizon {
            return Err(Error::domain(format!("invalid interval [{s}, {t}]")));
        }
        quadrature::adaptive_simpson(&self.lambda_norm_sq, s, t, SMOOTH_RISK_TOLERANCE)
    }
}

/// Law of a pricing-kernel increment ρ_{s,t} = exp(−A/2 − √A·Z), Z ~ N(0,1),
/// determined by the cumulated risk A alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelLaw {
    a: f64,
}

impl KernelLaw {
    pub fn new(a: f64) -> Result<Self> {
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::domain(format!("cumulated risk must be finite and >= 0, got {a}")));
        }
        Ok(Self { a })
    }

    pub fn between(risk: &impl CumulatedRisk, s: f64, t: f64) -> Result<Self> {
        Self::new(risk.accumulate_risk(s, t)?)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// √A, the standard deviation of ln ρ.
    pub fn vol(&self) -> f64 {
        self.a.sqrt()
    }

    pub fn is_degenerate(&self) -> bool {
        self.a == 0.0
    }

    /// Kernel value at standard-normal score `z`: exp(−A/2 − √A·z). Large
    /// scores are low kernel values (good states).
    #[inline]
    pub fn at_score(&self, z: f64) -> f64 {
        (-0.5 * self.a - self.vol() * z).exp()
    }

    /// Inverse of [`at_score`](Self::at_score).
    #[inline]
    pub fn score_of(&self, rho: f64) -> f64 {
        -(rho.ln() + 0.5 * self.a) / self.vol()
    }

    /// F^ρ(x). For A = 0 the law is a point mass at 1.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::domain(format!("kernel_cdf needs x > 0, got {x}")));
        }
        if self.is_degenerate() {
            return Ok(if x < 1.0 { 0.0 } else { 1.0 });
        }
        Ok(normal::cdf((x.ln() + 0.5 * self.a) / self.vol()))
    }

    /// (F^ρ)⁻¹(p) = exp(√A·Φ⁻¹(p) − A/2).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::domain(format!("kernel_quantile needs 0 < p < 1, got {p}")));
        }
        if self.is_degenerate() {
            return Ok(1.0);
        }
        Ok((self.vol() * normal::quantile(p) - 0.5 * self.a).exp())
    }

    /// E[ρᵏ] = exp(A·k(k−1)/2).
    pub fn power_mean(&self, k: f64) -> f64 {
        (0.5 * self.a * k * (k - 1.0)).exp()
    }

    /// ln E[ρᵏ].
    pub fn ln_power_mean(&self, k: f64) -> f64 {
        0.5 * self.a * k * (k - 1.0)
    }

    /// ∫₀ᵖ (F^ρ)⁻¹(q) dq = E[ρ·1{ρ ≤ (F^ρ)⁻¹(p)}] = Φ(Φ⁻¹(p) − √A).
    ///
    /// Defined through the quantile integral, so the point-mass law A = 0
    /// gives `p` (the A → 0 limit).
    pub fn partial_expectation(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("partial expectation needs p in [0, 1], got {p}")));
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        if p == 1.0 {
            return Ok(1.0);
        }
        if self.is_degenerate() {
            return Ok(p);
        }
        Ok(normal::cdf(normal::quantile(p) - self.vol()))
    }

    /// Law of ρ_{r,s}·ρ_{s,t} for independent increments.
    pub fn compose(&self, other: &KernelLaw) -> KernelLaw {
        KernelLaw { a: self.a + other.a }
    }
}

/// The γ-distorted market: market price of risk γλ under the measure with
/// density ρₜ^{1−γ}/E[ρₜ^{1−γ}].
#[derive(Debug, Clone, PartialEq)]
pub struct DistortedMarket {
    base: MarketCurve,
    gamma: f64,
    curve: MarketCurve,
}

/// Builds the γ-distorted market.
pub fn distort_market(curve: &MarketCurve, gamma: f64) -> Result<DistortedMarket> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::domain(format!("distortion parameter must be >= 0, got {gamma}")));
    }
    Ok(DistortedMarket {
        base: curve.clone(),
        gamma,
        curve: curve.scaled(gamma),
    })
}

impl DistortedMarket {
    pub fn base(&self) -> &MarketCurve {
        &self.base
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Coefficient curve of the distorted market (λ scaled by γ).
    pub fn curve(&self) -> &MarketCurve {
        &self.curve
    }

    /// Distorted kernel ρ_γ = ρ^γ·E[ρ^{1−γ}] for an original kernel value
    /// `rho` whose law is `law`.
    pub fn kernel(&self, rho: f64, law: &KernelLaw) -> f64 {
        (self.gamma * rho.ln() + law.ln_power_mean(1.0 - self.gamma)).exp()
    }
}

impl CumulatedRisk for DistortedMarket {
    fn accumulate_risk(&self, s: f64, t: f64) -> Result<f64> {
        self.curve.accumulate_risk(s, t)
    }
}

/// JSON form of a market:
/// `{ "horizon": 1.0, "segments": [ { "t0": 0.0, "t1": 1.0, "lambda": [0.3], "sigma": [[0.2]] } ] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub horizon: f64,
    pub segments: Vec<SegmentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub t0: f64,
    pub t1: f64,
    pub lambda: Vec<f64>,
    /// Row-major volatility matrix.
    pub sigma: Vec<Vec<f64>>,
}

impl MarketSpec {
    pub fn build(&self) -> Result<MarketCurve> {
        let segments = self
            .segments
            .iter()
            .map(|s| {
                let n = s.sigma.len();
                if s.sigma.iter().any(|row| row.len() != n) {
                    return Err(Error::Spec(format!("segment [{}, {}]: sigma must be square", s.t0, s.t1)));
                }
                let flat: Vec<f64> = s.sigma.iter().flatten().copied().collect();
                Ok((s.t0, s.t1, s.lambda.clone(), DMatrix::from_row_slice(n, n, &flat)))
            })
            .collect::<Result<Vec<_>>>()?;
        MarketCurve::new(self.horizon, segments)
    }
}

impl From<&MarketCurve> for MarketSpec {
    fn from(curve: &MarketCurve) -> Self {
        MarketSpec {
            horizon: curve.horizon,
            segments: curve
                .segments
                .iter()
                .map(|s| SegmentSpec {
                    t0: s.t0,
                    t1: s.t1,
                    lambda: s.lambda.clone(),
                    sigma: s.sigma.row_iter().map(|r| r.iter().copied().collect()).collect(),
                })
                .collect(),
        }
    }
}
