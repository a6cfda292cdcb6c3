//! Rank-dependent utility of a prospect, its certainty equivalent and the
//! split of the risk premium into a pessimism part and a utility part.
//!
//! With q the prospect's quantile function and ψ the distortion's score
//! density, V(X) = ∫₀¹ u(q(1−z)) dw(z) = ∫ u(q(Φ(s))) ψ(−s) ds.

use crate::distortion::{self, Distortion};
use crate::error::{Error, Result};
use crate::normal;
use crate::prospect::Prospect;
use crate::quadrature::{self, Tolerance};
use crate::utility::Utility;
use serde::{Deserialize, Serialize};
use std::cell::Cell;

/// Quadrature tolerance for RDU values.
pub const VALUE_TOLERANCE: Tolerance = Tolerance::new(1e-13, 1e-12);

// Integrand points whose distortion weight is below this are dropped when
// the utility there is infinite; such points only arise where Φ(s)
// underflows and the quantile collapses to its lower limit.
const NEGLIGIBLE_WEIGHT: f64 = 1e-250;

/// V(X). Returns −∞ when the integrand is −∞ on a set of positive weight
/// (this covers the convention for a divergent negative part), and +∞ when
/// only the positive part is infinite.
pub fn rdu_value(u: &dyn Utility, w: &Distortion, x: &Prospect) -> Result<f64> {
    if let Some(c) = x.as_constant() {
        return Ok(u.value(c));
    }
    let neg_inf = Cell::new(false);
    let pos_inf = Cell::new(false);
    let integrand = |s: f64| {
        let weight = w.score_density(-s);
        if weight == 0.0 {
            return 0.0;
        }
        let v = u.value(x.quantile_at_score(s));
        if v.is_infinite() {
            if weight > NEGLIGIBLE_WEIGHT {
                if v < 0.0 {
                    neg_inf.set(true);
                } else {
                    pos_inf.set(true);
                }
            }
            return 0.0;
        }
        v * weight
    };
    let (lo, hi) = w.score_support();
    let value = quadrature::gauss_kronrod_span(integrand, &[-w.score_centre(), 0.0], -hi, -lo, VALUE_TOLERANCE);
    if neg_inf.get() {
        return Ok(f64::NEG_INFINITY);
    }
    if pos_inf.get() {
        log::warn!("rank-dependent value has an infinite positive part");
        return Ok(f64::INFINITY);
    }
    value
}

/// E[X].
pub fn expected_value(x: &Prospect) -> Result<f64> {
    if let Some(c) = x.as_constant() {
        return Ok(c);
    }
    quadrature::gauss_kronrod_line(|s| x.quantile_at_score(s) * normal::pdf(s), &[0.0], VALUE_TOLERANCE)
}

/// u⁻¹(V(X)).
pub fn certainty_equivalent(u: &dyn Utility, w: &Distortion, x: &Prospect) -> Result<f64> {
    let v = rdu_value(u, w, x)?;
    if !v.is_finite() {
        return Err(Error::domain(format!("value {v} has no certainty equivalent")));
    }
    u.inverse(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPremia {
    pub mean: f64,
    pub distorted_mean: f64,
    pub value: f64,
    pub certainty_equivalent: f64,
    /// Δ_w = E[X] − distorted mean.
    pub pessimism: f64,
    /// Δ_{u,w} = distorted mean − CE.
    pub utility: f64,
}

impl RiskPremia {
    /// E[X] − CE.
    pub fn total(&self) -> f64 {
        self.mean - self.certainty_equivalent
    }
}

/// Splits E[X] − CE into Δ_w + Δ_{u,w}. The distorted mean is computed once
/// and shared by both parts, so the identity holds to rounding.
pub fn risk_premium_decomposition(u: &dyn Utility, w: &Distortion, x: &Prospect) -> Result<RiskPremia> {
    let mean = expected_value(x)?;
    let pessimism = distortion::pessimism_premium(w, x)?;
    let distorted_mean = mean - pessimism;
    let value = rdu_value(u, w, x)?;
    let ce = certainty_equivalent(u, w, x)?;
    Ok(RiskPremia {
        mean,
        distorted_mean,
        value,
        certainty_equivalent: ce,
        pessimism,
        utility: distorted_mean - ce,
    })
}
