//! Probability distortions: classical families, the forward Wang family and
//! its quantile-power integral form, the bifurcation test between viable and
//! degenerate forward distortions, the Jin–Zhou monotonicity test and the
//! pessimism premium.
//!
//! Densities are exposed in the normal-score coordinate: for p = Φ(ζ) the
//! measure dw(p) equals ψ(ζ)dζ with ψ(ζ) = w'(Φ(ζ))·φ(ζ). For the Wang
//! family ψ is itself a shifted normal density, which keeps every integral
//! well conditioned however far the displacement pushes mass into a tail.

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::market::KernelLaw;
use crate::normal;
use crate::prospect::Prospect;
use crate::quadrature::{self, Tolerance};
use serde::{Deserialize, Serialize};

/// Slack allowed when testing monotonicity of the Jin–Zhou ratio.
pub const MONOTONICITY_SLACK: f64 = 1e-10;
/// Agreement required between the two Wang representations.
pub const CROSS_REPRESENTATION_TOL: f64 = 1e-8;
/// Pointwise tolerance for accepting a fitted Wang distortion.
pub const FAMILY_FIT_TOL: f64 = 1e-6;
/// Slack in the degenerate-branch inequality w(p) ≥ E[ρ 1{ρ ≤ F⁻¹(p)}].
pub const DEGENERATE_SLACK: f64 = 1e-10;
/// Fitted distortion parameters at or below this are not viable forward
/// distortions (the fitted curve is then the degenerate boundary itself).
pub const GAMMA_FLOOR: f64 = 1e-8;

/// Smallest Tversky–Kahneman exponent that keeps the family increasing.
pub const TK_MIN_DELTA: f64 = 0.28;

// Generic densities are evaluated on this score range; outside it Φ(ζ)
// underflows and the density is treated as zero.
const GENERIC_SCORE_RANGE: f64 = 37.5;

#[derive(Debug, Clone, PartialEq)]
pub enum Distortion {
    Identity,
    /// Φ(Φ⁻¹(p) + shift).
    Wang { shift: f64 },
    /// p^δ / (p^δ + (1 − p)^δ)^{1/δ}.
    TverskyKahneman { delta: f64 },
    /// exp(−β(−ln p)^α).
    Prelec { alpha: f64, beta: f64 },
    Table(MonotoneCubic),
    /// (1 − weight)·first + weight·second.
    Blend {
        first: Box<Distortion>,
        second: Box<Distortion>,
        weight: f64,
    },
}

/// The forward Wang distortion attached to a distortion parameter γ and
/// a cumulated risk A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WangForward {
    gamma: f64,
    law: KernelLaw,
}

impl WangForward {
    pub fn new(gamma: f64, law: KernelLaw) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::domain(format!("distortion parameter must be >= 0, got {gamma}")));
        }
        Ok(Self { gamma, law })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn law(&self) -> KernelLaw {
        self.law
    }

    /// (γ − 1)√A.
    pub fn shift(&self) -> f64 {
        (self.gamma - 1.0) * self.law.vol()
    }

    pub fn eval(&self, p: f64) -> f64 {
        wang(self.shift(), p)
    }

    pub fn distortion(&self) -> Distortion {
        Distortion::Wang { shift: self.shift() }
    }
}

fn wang(shift: f64, p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else if p >= 1.0 {
        1.0
    } else if shift == 0.0 {
        p
    } else {
        normal::cdf(normal::quantile(p) + shift)
    }
}

/// Φ(Φ⁻¹(p) + (γ − 1)√A).
pub fn wang_eval(d: &WangForward, p: f64) -> f64 {
    d.eval(p)
}

/// The forward Wang distortion through its defining integral
/// (1/E[ρ^{1−γ}])·∫₀ᵖ (F⁻¹(q))^{1−γ} dq, integrated in q = Φ(z).
pub fn wang_eval_integral(gamma: f64, law: &KernelLaw, p: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::domain(format!("distortion parameter must be > 0, got {gamma}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability must lie in [0, 1], got {p}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 || law.is_degenerate() {
        return Ok(p);
    }
    let exponent = 1.0 - gamma;
    let ln_norm = law.ln_power_mean(exponent);
    let integrand = |z: f64| {
        // F⁻¹(Φ(z)) is the kernel at score −z.
        let ln_quantile = -0.5 * law.a() + law.vol() * z;
        (exponent * ln_quantile - ln_norm + normal::ln_pdf(z)).exp()
    };
    let upper = normal::quantile(p);
    let centre = exponent * law.vol();
    let lower = upper.min(centre) - quadrature::LINE_HALF_WIDTH;
    let mut breaks: Vec<f64> = [lower, centre - 6.0, centre - 3.0, centre, centre + 3.0, centre + 6.0, upper]
        .into_iter()
        .filter(|b| *b >= lower && *b <= upper)
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    quadrature::gauss_kronrod_pieces(integrand, &breaks, Tolerance::new(1e-14, 1e-13))
}

impl Distortion {
    pub fn tversky_kahneman(delta: f64) -> Result<Self> {
        if !(delta >= TK_MIN_DELTA) || !delta.is_finite() {
            return Err(Error::Spec(format!(
                "Tversky-Kahneman exponent must be >= {TK_MIN_DELTA}, got {delta}"
            )));
        }
        Ok(Distortion::TverskyKahneman { delta })
    }

    pub fn prelec(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::Spec(format!("Prelec parameters must be positive, got ({alpha}, {beta})")));
        }
        Ok(Distortion::Prelec { alpha, beta })
    }

    /// Tabulated distortion through (0, 0) and (1, 1), strictly increasing in
    /// both coordinates, interpolated by a monotone cubic.
    pub fn table(p: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let ends_ok = |v: &[f64]| v.first() == Some(&0.0) && v.last() == Some(&1.0);
        if !ends_ok(&p) || !ends_ok(&w) {
            return Err(Error::Spec("distortion table must start at (0, 0) and end at (1, 1)".into()));
        }
        if w.windows(2).any(|s| !(s[1] > s[0])) {
            return Err(Error::Spec("distortion table values must be strictly increasing".into()));
        }
        Ok(Distortion::Table(MonotoneCubic::new(p, w)?))
    }

    pub fn blend(first: Distortion, second: Distortion, weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::Spec(format!("blend weight must lie in [0, 1], got {weight}")));
        }
        Ok(Distortion::Blend {
            first: Box::new(first),
            second: Box::new(second),
            weight,
        })
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Distortion::Identity => true,
            Distortion::Wang { shift } => *shift == 0.0,
            _ => false,
        }
    }

    /// w(p), exact at the endpoints.
    pub fn eval(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return 1.0;
        }
        match self {
            Distortion::Identity => p,
            Distortion::Wang { shift } => wang(*shift, p),
            Distortion::TverskyKahneman { delta } => {
                let a = p.powf(*delta);
                a / (a + (1.0 - p).powf(*delta)).powf(1.0 / delta)
            }
            Distortion::Prelec { alpha, beta } => (-beta * (-p.ln()).powf(*alpha)).exp(),
            Distortion::Table(t) => t.eval(p),
            Distortion::Blend { first, second, weight } => {
                (1.0 - weight) * first.eval(p) + weight * second.eval(p)
            }
        }
    }

    /// w(Φ(ζ)).
    pub fn eval_at_score(&self, zeta: f64) -> f64 {
        match self {
            Distortion::Identity => normal::cdf(zeta),
            Distortion::Wang { shift } => normal::cdf(zeta + shift),
            Distortion::Blend { first, second, weight } => {
                (1.0 - weight) * first.eval_at_score(zeta) + weight * second.eval_at_score(zeta)
            }
            _ => self.eval(normal::cdf(zeta)),
        }
    }

    /// ln ψ(ζ) = ln[w'(Φ(ζ))·φ(ζ)].
    pub fn ln_score_density(&self, zeta: f64) -> f64 {
        match self {
            Distortion::Identity => normal::ln_pdf(zeta),
            Distortion::Wang { shift } => normal::ln_pdf(zeta + shift),
            Distortion::Prelec { alpha, beta } => {
                // L = −ln Φ(ζ); in the upper tail L ≈ 1 − Φ(ζ) and its log is
                // taken from the tail function directly.
                let ln_cdf = normal::ln_cdf(zeta);
                let l = -ln_cdf;
                let ln_l = if zeta > 5.0 {
                    let sf = normal::sf(zeta);
                    normal::ln_cdf(-zeta) + (0.5 * sf + sf * sf / 3.0).ln_1p()
                } else {
                    l.ln()
                };
                (alpha * beta).ln() + (alpha - 1.0) * ln_l - beta * (alpha * ln_l).exp() + normal::ln_pdf(zeta)
                    - ln_cdf
            }
            Distortion::Blend { first, second, weight } => {
                let a = (1.0 - weight).ln() + first.ln_score_density(zeta);
                let b = weight.ln() + second.ln_score_density(zeta);
                let m = a.max(b);
                if m == f64::NEG_INFINITY {
                    m
                } else {
                    m + ((a - m).exp() + (b - m).exp()).ln()
                }
            }
            Distortion::TverskyKahneman { .. } | Distortion::Table(_) => {
                if zeta.abs() > GENERIC_SCORE_RANGE {
                    return f64::NEG_INFINITY;
                }
                let d = self.derivative_pq(normal::cdf(zeta), normal::sf(zeta));
                d.ln() + normal::ln_pdf(zeta)
            }
        }
    }

    /// ψ(ζ) = w'(Φ(ζ))·φ(ζ).
    pub fn score_density(&self, zeta: f64) -> f64 {
        self.ln_score_density(zeta).exp()
    }

    /// ln w'(Φ(ζ)).
    pub fn ln_derivative_at_score(&self, zeta: f64) -> f64 {
        match self {
            Distortion::Wang { shift } => -shift * zeta - 0.5 * shift * shift,
            Distortion::Identity => 0.0,
            _ => self.ln_score_density(zeta) - normal::ln_pdf(zeta),
        }
    }

    /// w'(p) on (0, 1).
    pub fn derivative(&self, p: f64) -> f64 {
        self.derivative_pq(p, 1.0 - p)
    }

    // Derivative with the complement 1 − p supplied separately, so that
    // families singular at p = 1 stay accurate there.
    fn derivative_pq(&self, p: f64, q: f64) -> f64 {
        match self {
            Distortion::Identity => 1.0,
            Distortion::Wang { shift } => {
                let x = normal::quantile(p);
                (-shift * x - 0.5 * shift * shift).exp()
            }
            Distortion::TverskyKahneman { delta } => {
                let pd = p.powf(*delta);
                let s = pd + q.powf(*delta);
                let w = pd / s.powf(1.0 / delta);
                w * (delta / p - (p.powf(delta - 1.0) - q.powf(delta - 1.0)) / s)
            }
            Distortion::Prelec { alpha, beta } => {
                let l = -p.ln();
                let w = (-beta * l.powf(*alpha)).exp();
                w * alpha * beta * l.powf(alpha - 1.0) / p
            }
            Distortion::Table(t) => t.derivative(p),
            Distortion::Blend { first, second, weight } => {
                (1.0 - weight) * first.derivative_pq(p, q) + weight * second.derivative_pq(p, q)
            }
        }
    }

    /// Score ζ with w(Φ(ζ)) = y, for y in (0, 1).
    pub fn inverse_score(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if y >= 1.0 {
            return f64::INFINITY;
        }
        match self {
            Distortion::Identity => normal::quantile(y),
            Distortion::Wang { shift } => normal::quantile(y) - shift,
            Distortion::Prelec { .. } => normal::quantile(self.inverse(y)),
            _ => {
                let (mut lo, mut hi) = (-GENERIC_SCORE_RANGE, GENERIC_SCORE_RANGE);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.eval_at_score(mid) < y {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    /// w⁻¹(y).
    pub fn inverse(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y >= 1.0 {
            return 1.0;
        }
        match self {
            Distortion::Identity => y,
            Distortion::Wang { shift } => wang(-shift, y),
            Distortion::Prelec { alpha, beta } => (-(-y.ln() / beta).powf(1.0 / alpha)).exp(),
            _ => normal::cdf(self.inverse_score(y)),
        }
    }

    /// Score around which ψ concentrates; used to place quadrature breaks.
    pub fn score_centre(&self) -> f64 {
        match self {
            Distortion::Wang { shift } => -shift,
            _ => 0.0,
        }
    }

    /// Window of scores outside which ψ carries no mass in double precision.
    pub fn score_support(&self) -> (f64, f64) {
        let c = self.score_centre();
        let default = (c - quadrature::LINE_HALF_WIDTH, c + quadrature::LINE_HALF_WIDTH);
        match self {
            Distortion::Prelec { alpha, beta } => {
                // w(Φ(ζ)) = exp(−β L^α) with L ≈ ζ²/2 in the lower tail; stop
                // once that falls below e^{-40}.
                let l = (40.0 / beta).powf(1.0 / alpha);
                (-(2.0 * l).sqrt().max(quadrature::LINE_HALF_WIDTH), default.1)
            }
            Distortion::Blend { first, second, .. } => {
                let (a, b) = first.score_support();
                let (c, d) = second.score_support();
                (a.min(c), b.max(d))
            }
            _ => default,
        }
    }
}

/// Outcome of the bifurcation test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneracyClass {
    /// Matches the forward Wang family for some γ > 0.
    Nondegenerate,
    /// Dominates the kernel's partial expectation everywhere: the optimum
    /// holds no risky assets.
    Degenerate,
    /// Neither; not a viable forward distortion.
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: DegeneracyClass,
    /// Fitted γ when the fit was attempted.
    pub fitted_gamma: Option<f64>,
    /// Largest pointwise gap between w and the fitted Wang distortion.
    pub fit_error: f64,
    /// Smallest value of w(p) − E[ρ 1{ρ ≤ F⁻¹(p)}] on the grid.
    pub min_margin: f64,
}

/// Classifies `d` against the kernel law on an interior grid of
/// `grid_size` probabilities. The Wang fit is tried first.
pub fn check_degenerate(d: &Distortion, law: &KernelLaw, grid_size: usize) -> Result<Classification> {
    if grid_size < 3 {
        return Err(Error::domain(format!("grid_size must be >= 3, got {grid_size}")));
    }
    let grid: Vec<f64> = (1..=grid_size).map(|i| i as f64 / (grid_size + 1) as f64).collect();

    let fitted_gamma = if law.is_degenerate() {
        // Every Wang distortion is the identity when A = 0.
        Some(1.0)
    } else {
        let g = 1.0 + normal::quantile(d.eval(0.5)) / law.vol();
        g.is_finite().then_some(g)
    };
    let fit_error = match fitted_gamma {
        Some(g) if g > GAMMA_FLOOR => {
            let shift = (g - 1.0) * law.vol();
            grid.iter().map(|&p| (d.eval(p) - wang(shift, p)).abs()).fold(0.0, f64::max)
        }
        _ => f64::INFINITY,
    };
    let mut min_margin = f64::INFINITY;
    for &p in &grid {
        min_margin = min_margin.min(d.eval(p) - law.partial_expectation(p)?);
    }
    let class = if fit_error <= FAMILY_FIT_TOL {
        DegeneracyClass::Nondegenerate
    } else if min_margin >= -DEGENERATE_SLACK {
        DegeneracyClass::Degenerate
    } else {
        DegeneracyClass::Neither
    };
    Ok(Classification {
        class,
        fitted_gamma,
        fit_error,
        min_margin,
    })
}

/// True when p ↦ F⁻¹(p)/w'(p) is nondecreasing on an interior grid.
pub fn jin_zhou_monotone(d: &Distortion, law: &KernelLaw, grid_size: usize) -> Result<bool> {
    if grid_size < 2 {
        return Err(Error::domain(format!("grid_size must be >= 2, got {grid_size}")));
    }
    let mut prev = f64::NEG_INFINITY;
    let mut monotone = true;
    for i in 1..=grid_size {
        let p = i as f64 / (grid_size + 1) as f64;
        let slope = d.derivative(p);
        if !(slope > 0.0) {
            return Err(Error::InvariantViolation(format!(
                "distortion derivative is {slope} at p = {p}; expected > 0"
            )));
        }
        let ratio = law.quantile(p)? / slope;
        if ratio + MONOTONICITY_SLACK < prev {
            monotone = false;
        }
        prev = ratio;
    }
    Ok(monotone)
}

/// E[X] minus the distorted mean ∫₀¹ q_X(1 − z) dw(z).
pub fn pessimism_premium(d: &Distortion, x: &Prospect) -> Result<f64> {
    if x.as_constant().is_some() || d.is_identity() {
        return Ok(0.0);
    }
    let integrand = |s: f64| {
        let weight = normal::pdf(s) - d.score_density(-s);
        if weight == 0.0 {
            0.0
        } else {
            x.quantile_at_score(s) * weight
        }
    };
    let (lo, hi) = d.score_support();
    let (lo, hi) = (lo.min(-hi).min(-quadrature::LINE_HALF_WIDTH), hi.max(-lo).max(quadrature::LINE_HALF_WIDTH));
    quadrature::gauss_kronrod_span(integrand, &[0.0, -d.score_centre()], lo, hi, Tolerance::new(1e-13, 1e-11))
        .map_err(|e| match e {
            Error::Numeric { achieved, .. } => {
                Error::numeric("pessimism premium: quantile not integrable to tolerance", achieved)
            }
            other => other,
        })
}

/// JSON form: `{ "family": "wang_forward", "gamma": 2.0 }`,
/// `{ "family": "prelec", "alpha": 0.65, "beta": 1.0 }`,
/// `{ "family": "table", "p": [...], "w": [...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistortionSpec {
    Identity,
    Wang { shift: f64 },
    WangForward { gamma: f64 },
    TverskyKahneman { delta: f64 },
    Prelec { alpha: f64, beta: f64 },
    Table { p: Vec<f64>, w: Vec<f64> },
}

impl DistortionSpec {
    /// Builds the distortion; the forward Wang family takes its displacement
    /// from `law`.
    pub fn build(&self, law: &KernelLaw) -> Result<Distortion> {
        match self {
            DistortionSpec::Identity => Ok(Distortion::Identity),
            DistortionSpec::Wang { shift } => {
                if !shift.is_finite() {
                    return Err(Error::Spec("Wang shift must be finite".into()));
                }
                Ok(Distortion::Wang { shift: *shift })
            }
            DistortionSpec::WangForward { gamma } => Ok(WangForward::new(*gamma, *law)?.distortion()),
            DistortionSpec::TverskyKahneman { delta } => Distortion::tversky_kahneman(*delta),
            DistortionSpec::Prelec { alpha, beta } => Distortion::prelec(*alpha, *beta),
            DistortionSpec::Table { p, w } => Distortion::table(p.clone(), w.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn law(a: f64) -> KernelLaw {
        KernelLaw::new(a).unwrap()
    }

    fn wf(gamma: f64, a: f64) -> WangForward {
        WangForward::new(gamma, law(a)).unwrap()
    }


    fn degenerate_boundary(a: f64) -> Distortion {
        Distortion::Wang { shift: -a.sqrt() }
    }

    #[test]
    fn wang_eval_examples() {
        assert_eq!(wang_eval(&wf(1.0, 0.7), 0.37), 0.37);
        assert_eq!(wang_eval(&wf(2.0, 1.0), 0.0), 0.0);
        assert_eq!(wang_eval(&wf(2.0, 1.0), 1.0), 1.0);
        let v = wang_eval(&wf(2.0, 1.0), 0.5);
        assert!((v - crate::oracle::phi(1.0)).abs() < 1e-14, "{v} {}", crate::oracle::phi(1.0));
        assert_eq!(wang_eval(&wf(3.0, 0.0), 0.2), 0.2);
    }

    #[test]
    fn wang_integral_examples() {
        assert_eq!(wang_eval_integral(2.0, &law(0.5), 1.0).unwrap(), 1.0);
        assert!((wang_eval_integral(1.0, &law(0.5), 0.3).unwrap() - 0.3).abs() < 1e-12);
        let v = wang_eval_integral(2.0, &law(1.0), 0.5).unwrap();
        assert!((v - 0.841_344_746_068_542_9).abs() < 1e-8);
        assert!(wang_eval_integral(0.0, &law(1.0), 0.5).is_err());
        assert!(wang_eval_integral(1.0, &law(1.0), 1.5).is_err());
    }

    #[test]
    fn wang_integral_matches_closed_form_on_coarse_grid() {
        for &g in &[0.25, 1.5, 4.0] {
            for &a in &[0.01, 4.0] {
                for k in 1..50 {
                    let p = k as f64 / 50.0;
                    let lhs = wang_eval_integral(g, &law(a), p).unwrap();
                    assert!((lhs - wf(g, a).eval(p)).abs() < CROSS_REPRESENTATION_TOL);
                }
            }
        }
    }

    #[test]
    fn classification_examples() {
        let l = law(0.09);
        let id = check_degenerate(&Distortion::Identity, &l, 999).unwrap();
        assert_eq!(id.class, DegeneracyClass::Nondegenerate);
        assert!((id.fitted_gamma.unwrap() - 1.0).abs() < 1e-12);

        let w = wf(0.5, 1.0);
        let c = check_degenerate(&w.distortion(), &w.law(), 999).unwrap();
        assert_eq!(c.class, DegeneracyClass::Nondegenerate);
        assert!((c.fitted_gamma.unwrap() - 0.5).abs() < 1e-6);

        let square = Distortion::table(
            (0..=200).map(|i| i as f64 / 200.0).collect(),
            (0..=200).map(|i| (i as f64 / 200.0).powi(2)).collect(),
        )
        .unwrap();
        assert_eq!(check_degenerate(&square, &l, 999).unwrap().class, DegeneracyClass::Neither);

        let boundary = check_degenerate(&degenerate_boundary(0.09), &l, 999).unwrap();
        assert_eq!(boundary.class, DegeneracyClass::Degenerate);

        let prelec = Distortion::prelec(0.65, 1.0).unwrap();
        assert_eq!(check_degenerate(&prelec, &l, 999).unwrap().class, DegeneracyClass::Neither);
        assert!(check_degenerate(&prelec, &l, 2).is_err());
    }

    #[test]
    fn square_distortion_brute_force_sweep() {
        // both sides on a 10⁴ grid: w(p) = p² falls below the partial
        // expectation for small p, and is not a Wang curve
        let l = law(0.09);
        let below = (1..10_000)
            .map(|i| i as f64 / 10_000.0)
            .any(|p| p * p < l.partial_expectation(p).unwrap() - 1e-10);
        assert!(below);
    }

    #[test]
    fn degenerate_blend_stays_degenerate() {
        let l = law(0.25);
        let blended = Distortion::blend(degenerate_boundary(0.25), Distortion::Identity, 0.05).unwrap();
        let c = check_degenerate(&blended, &l, 999).unwrap();
        assert_eq!(c.class, DegeneracyClass::Degenerate);
        assert!(c.min_margin > 0.0);
    }

    #[test]
    fn zero_risk_classification() {
        let l = law(0.0);
        assert_eq!(
            check_degenerate(&Distortion::Identity, &l, 99).unwrap().class,
            DegeneracyClass::Nondegenerate
        );
        let above = Distortion::Wang { shift: 0.4 };
        assert_eq!(check_degenerate(&above, &l, 99).unwrap().class, DegeneracyClass::Degenerate);
        let below = Distortion::Wang { shift: -0.4 };
        assert_eq!(check_degenerate(&below, &l, 99).unwrap().class, DegeneracyClass::Neither);
    }

    #[test]
    fn jin_zhou_examples() {
        for &g in &[0.1, 0.5, 1.0, 2.0, 5.0] {
            for &a in &[0.01, 0.09, 1.0] {
                assert!(jin_zhou_monotone(&wf(g, a).distortion(), &law(a), 999).unwrap());
            }
        }
        assert!(jin_zhou_monotone(&Distortion::Identity, &law(0.09), 999).unwrap());
        let prelec = Distortion::prelec(0.65, 1.0).unwrap();
        assert!(!jin_zhou_monotone(&prelec, &law(0.09), 999).unwrap());
    }

    #[test]
    fn jin_zhou_rejects_flat_tables() {
        let flat = Distortion::Table(MonotoneCubic::new(vec![0.0, 0.5, 0.6, 1.0], vec![0.0, 0.5, 0.5, 1.0]).unwrap());
        assert!(matches!(
            jin_zhou_monotone(&flat, &law(0.09), 99),
            Err(Error::InvariantViolation(_))
        ));
    }

    #[test]
    fn prelec_brute_force_ratio_decreases_near_one() {
        let l = law(0.09);
        let prelec = Distortion::prelec(0.65, 1.0).unwrap();
        let f = |p: f64| l.quantile(p).unwrap() / prelec.derivative(p);
        assert!(f(0.999) < f(0.99));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let ds = [
            Distortion::Wang { shift: 0.7 },
            Distortion::tversky_kahneman(0.65).unwrap(),
            Distortion::prelec(0.65, 1.0).unwrap(),
            Distortion::blend(Distortion::Wang { shift: -0.3 }, Distortion::Identity, 0.2).unwrap(),
        ];
        for d in &ds {
            for k in 1..20 {
                let p = k as f64 / 20.0;
                let h = 1e-6;
                let fd = (d.eval(p + h) - d.eval(p - h)) / (2.0 * h);
                assert!((fd - d.derivative(p)).abs() < 1e-6 * fd.abs().max(1.0), "{d:?} p={p}");
                let z = normal::quantile(p);
                let psi = d.derivative(p) * normal::pdf(z);
                assert!((d.score_density(z) - psi).abs() < 1e-12 * psi.max(1.0), "{d:?} p={p}");
            }
        }
    }

    #[test]
    fn score_densities_integrate_to_one() {
        let ds = [
            Distortion::Identity,
            Distortion::Wang { shift: -2.5 },
            Distortion::tversky_kahneman(0.61).unwrap(),
            Distortion::prelec(0.65, 1.0).unwrap(),
            Distortion::prelec(0.4, 0.8).unwrap(),
        ];
        for d in &ds {
            let (lo, hi) = d.score_support();
            let mass =
                quadrature::gauss_kronrod_span(|z| d.score_density(z), &[d.score_centre()], lo, hi, Tolerance::default())
                    .unwrap();
            assert!((mass - 1.0).abs() < 1e-9, "{d:?} mass={mass}");
        }
    }

    #[test]
    fn inverses_round_trip() {
        let ds = [
            Distortion::Identity,
            Distortion::Wang { shift: 1.3 },
            Distortion::tversky_kahneman(0.65).unwrap(),
            Distortion::prelec(0.65, 1.0).unwrap(),
            Distortion::table(vec![0.0, 0.3, 1.0], vec![0.0, 0.5, 1.0]).unwrap(),
        ];
        for d in &ds {
            for k in 1..100 {
                let y = k as f64 / 100.0;
                assert!((d.eval(d.inverse(y)) - y).abs() < 1e-12, "{d:?} y={y}");
                assert!((d.eval_at_score(d.inverse_score(y)) - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pessimism_examples() {
        let c = Prospect::constant(3.0).unwrap();
        assert_eq!(pessimism_premium(&wf(0.5, 1.0).distortion(), &c).unwrap(), 0.0);
        let u = Prospect::uniform();
        assert_eq!(pessimism_premium(&Distortion::Identity, &u).unwrap(), 0.0);
        let delta = pessimism_premium(&wf(0.5, 1.0).distortion(), &u).unwrap();
        assert!(delta > 0.0);
        // brute force: midpoint rule on ∫ p dp − ∫ (1 − z) dw(z)
        let w = wf(0.5, 1.0);
        let n = 200_000;
        let mut distorted = 0.0;
        for i in 0..n {
            let (a, b) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
            distorted += (1.0 - 0.5 * (a + b)) * (w.eval(b) - w.eval(a));
        }
        assert!((delta - (0.5 - distorted)).abs() < 1e-8);
    }

    #[test]
    fn spec_parsing() {
        let l = law(1.0);
        let s: DistortionSpec = serde_json::from_str(r#"{ "family": "wang_forward", "gamma": 2.0 }"#).unwrap();
        assert_eq!(s.build(&l).unwrap(), Distortion::Wang { shift: 1.0 });
        let s: DistortionSpec = serde_json::from_str(r#"{ "family": "prelec", "alpha": 0.65, "beta": 1.0 }"#).unwrap();
        assert_eq!(s.build(&l).unwrap(), Distortion::Prelec { alpha: 0.65, beta: 1.0 });
        let s: DistortionSpec =
            serde_json::from_str(r#"{ "family": "table", "p": [0, 0.5, 1], "w": [0, 0.7, 1] }"#).unwrap();
        assert!((s.build(&l).unwrap().eval(0.5) - 0.7).abs() < 1e-15);
        let bad: DistortionSpec =
            serde_json::from_str(r#"{ "family": "table", "p": [0, 0.5, 1], "w": [0, 0.7, 0.9] }"#).unwrap();
        assert!(bad.build(&l).is_err());
        assert!(serde_json::from_str::<DistortionSpec>(r#"{ "family": "nope" }"#).is_err());
    }

    #[test]
    fn horizon_dependence_only_vanishes_at_unit_gamma() {
        let a_full = 0.09;
        for &g in &[0.5, 1.0, 2.0] {
            let mut max_gap: f64 = 0.0;
            for &a_tail in &[0.0225, 0.045] {
                for k in 1..100 {
                    let p = k as f64 / 100.0;
                    max_gap = max_gap.max((wf(g, a_full).eval(p) - wf(g, a_tail).eval(p)).abs());
                }
            }
            if g == 1.0 {
                assert_eq!(max_gap, 0.0);
            } else {
                assert!(max_gap > 1e-3);
            }
        }
    }

    proptest! {
        #[test]
        fn cross_representation(g in 0.2f64..4.0, a in 0.005f64..4.0, p in 0.0f64..=1.0) {
            let lhs = wang_eval_integral(g, &law(a), p).unwrap();
            prop_assert!((lhs - wf(g, a).eval(p)).abs() < CROSS_REPRESENTATION_TOL);
        }

        #[test]
        fn wang_dominates_identity_iff_gamma_at_least_one(g in 0.0f64..4.0, a in 0.01f64..4.0) {
            let w = wf(g, a);
            let dominates = (1..200).map(|k| k as f64 / 200.0).all(|p| w.eval(p) >= p - 1e-15);
            prop_assert_eq!(dominates, g >= 1.0);
        }

        #[test]
        fn wang_is_strictly_increasing(g in 0.0f64..2.5, a in 0.0f64..1.0) {
            let w = wf(g, a);
            let mut prev = 0.0;
            for k in 1..400 {
                let v = w.eval(k as f64 / 400.0);
                prop_assert!(v > prev);
                prev = v;
            }
        }
    }
}
