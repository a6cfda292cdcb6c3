//! Checks of the forward criterion: value preservation along the optimum,
//! suboptimality of witness policies, re-solving the conditional problem,
//! and the dynamic-utility construction.
//!
//! Conditional laws are taken through X*_s alone: given X*_s = x the
//! optimum at t is a deterministic function of the kernel increment ρ_{s,t}.
//! The supermartingale side is tested on constant-proportion witnesses only,
//! whose terminal laws are lognormal; no finite family certifies it for all
//! admissible policies.

use crate::backward::{self, BackwardSolution};
use crate::distortion::{self, DegeneracyClass, Distortion, WangForward};
use crate::error::{Error, Result};
use crate::forward_utility::{forward_u, ForwardPair};
use crate::market::{KernelLaw, MarketCurve};
use crate::normal;
use crate::prospect::Prospect;
use crate::quadrature::{self, Tolerance};
use crate::rdu;
use crate::simulate::Policy;
use crate::stats::Moments;
use crate::utility::Utility;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const VALUE_TOLERANCE: f64 = 1e-6;
pub const MARGIN_FLOOR: f64 = -1e-8;
pub const OPTIMAL_MARGIN_TOLERANCE: f64 = 1e-6;
pub const RESOLVE_TOLERANCE: f64 = 1e-6;
const GAP_LEVELS: usize = 99;

/// The optimum at t given X*_s = xs, as a prospect in ρ_{s,t}.
fn conditional_optimum(pair: &ForwardPair, s: f64, t: f64, xs: f64) -> Result<Prospect> {
    if pair.is_degenerate() {
        return Prospect::constant(xs);
    }
    let law = pair.kernel_law(s, t)?;
    let us = pair.utility_at(s)?;
    let ut = pair.utility_at(t)?;
    let ln_scale = us.marginal(xs).ln() + law.ln_power_mean(1.0 - pair.gamma());
    let gamma = pair.gamma();
    Ok(Prospect::kernel_map(law, move |rho| ut.marginal_inverse((ln_scale + gamma * rho.ln()).exp())))
}

/// V_{s,t}(X*_t | X*_s = x) − u_s(x).
pub fn verify_value_preservation(pair: &ForwardPair, s: f64, t: f64, x: f64) -> Result<f64> {
    check_times(pair, s, t, x)?;
    let w = pair.distortion(s, t)?.distortion();
    let ut = pair.utility_at(t)?;
    let value = rdu::rdu_value(&ut, &w, &conditional_optimum(pair, s, t, x)?)?;
    Ok(value - forward_u(pair, s, x)?)
}

fn check_times(pair: &ForwardPair, s: f64, t: f64, x: f64) -> Result<()> {
    if !(s >= 0.0 && s < t && t <= pair.market().horizon()) || !(x > 0.0) {
        return Err(Error::domain(format!(
            "need 0 <= s < t <= {} and x > 0, got s={s}, t={t}, x={x}",
            pair.market().horizon()
        )));
    }
    Ok(())
}

/// A policy whose conditional terminal law may or may not be available.
#[derive(Clone, Copy)]
pub enum WitnessPolicy<'a> {
    /// Holds κ·X along the market's risky direction.
    ConstantProportion(f64),
    /// The forward optimum.
    Optimal,
    /// Any other rule; its conditional law is not computable here.
    General(&'a dyn Policy),
}

impl std::fmt::Debug for WitnessPolicy<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WitnessPolicy::ConstantProportion(k) => write!(f, "ConstantProportion({k})"),
            WitnessPolicy::Optimal => write!(f, "Optimal"),
            WitnessPolicy::General(_) => write!(f, "General"),
        }
    }
}

/// Proportion κ* when the optimum is itself a constant proportion, which
/// is the case for single-atom mixtures: κ* = γ·y.
pub fn optimal_proportion(pair: &ForwardPair) -> Option<f64> {
    match pair.mixture().atoms() {
        [atom] => Some(pair.gamma() * atom.y),
        _ => None,
    }
}

/// u_s(x) minus the conditional value at t of each policy started from x
/// at s.
pub fn verify_suboptimality(
    pair: &ForwardPair,
    s: f64,
    t: f64,
    x: f64,
    policies: &[WitnessPolicy<'_>],
) -> Result<Vec<f64>> {
    check_times(pair, s, t, x)?;
    let w = pair.distortion(s, t)?.distortion();
    let ut = pair.utility_at(t)?;
    let us = forward_u(pair, s, x)?;
    let law = pair.kernel_law(s, t)?;
    policies
        .iter()
        .map(|p| {
            let prospect = match *p {
                WitnessPolicy::Optimal => conditional_optimum(pair, s, t, x)?,
                WitnessPolicy::ConstantProportion(k) => {
                    // X_t = x ρ^{−κ}/E[ρ^{1−κ}]
                    let ln_norm = law.ln_power_mean(1.0 - k);
                    Prospect::kernel_map(law, move |rho| x * (-k * rho.ln() - ln_norm).exp())
                }
                WitnessPolicy::General(_) => {
                    return Err(Error::UnsupportedPolicy(
                        "only constant-proportion witnesses have a computable conditional law".into(),
                    ))
                }
            };
            Ok(us - rdu::rdu_value(&ut, &w, &prospect)?)
        })
        .collect()
}

/// Re-solves the conditional problem at s with the backward solver and
/// returns the sup-norm gap to the forward optimum over a ρ-quantile grid.
pub fn verify_resolve(pair: &ForwardPair, s: f64, t: f64, x: f64) -> Result<f64> {
    check_times(pair, s, t, x)?;
    let law = pair.kernel_law(s, t)?;
    let w = pair.distortion(s, t)?.distortion();
    let ut = pair.utility_at(t)?;
    let sol = backward::solve_multiplier(&ut, &w, law, x)?;
    let target = conditional_optimum(pair, s, t, x)?;
    Ok(level_grid()
        .map(|p| {
            let rho = law.quantile(p).unwrap_or(1.0);
            let z = law.score_of(rho);
            (sol.terminal_wealth.eval(rho) - target.quantile_at_score(z)).abs()
        })
        .fold(0.0, f64::max))
}

fn level_grid() -> impl Iterator<Item = f64> {
    (1..=GAP_LEVELS).map(|i| i as f64 / (GAP_LEVELS + 1) as f64)
}

/// Utility with u'(z) = u'_0(1)·(u'_0(z)/u'_0(1))^r, so that its
/// Arrow–Pratt coefficient is r times that of u_0 and u'(1) = u'_0(1).
/// Values are normalised by u(1) = u_0(1).
pub struct ScaledAversion {
    base: Arc<dyn Utility>,
    ratio: f64,
    anchor: f64,
}

impl ScaledAversion {
    pub fn new(base: Arc<dyn Utility>, ratio: f64) -> Result<Self> {
        if !(ratio > 0.0) || !ratio.is_finite() {
            return Err(Error::domain(format!("risk-aversion ratio must be positive, got {ratio}")));
        }
        let anchor = base.marginal(1.0);
        Ok(Self { base, ratio, anchor })
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }
}

impl Utility for ScaledAversion {
    fn value(&self, x: f64) -> f64 {
        if x == 1.0 {
            return self.base.value(1.0);
        }
        // ∫₁ˣ u'(z) dz in v = ln z
        let f = |v: f64| {
            let z = v.exp();
            self.marginal(z) * z
        };
        let (lo, hi, sign) = if x > 1.0 { (0.0, x.ln(), 1.0) } else { (x.ln(), 0.0, -1.0) };
        match quadrature::gauss_kronrod(f, lo, hi, Tolerance::new(1e-14, 1e-12)) {
            Ok(v) => self.base.value(1.0) + sign * v,
            Err(_) => f64::NAN,
        }
    }

    fn marginal(&self, x: f64) -> f64 {
        self.anchor * (self.base.marginal(x) / self.anchor).powf(self.ratio)
    }

    fn marginal_inverse(&self, y: f64) -> f64 {
        self.base.marginal_inverse(self.anchor * (y / self.anchor).powf(1.0 / self.ratio))
    }
}

/// A family (u_{t,T}, w_{t,T}) on [0, T] generated by a path t ↦ γ_t.
pub struct DynamicProcess {
    horizon: f64,
    market: MarketCurve,
    u0: Arc<dyn Utility>,
    gamma0: f64,
    gamma_path: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    frozen_distortion: bool,
}

impl std::fmt::Debug for DynamicProcess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DynamicProcess")
            .field("horizon", &self.horizon)
            .field("gamma0", &self.gamma0)
            .field("frozen_distortion", &self.frozen_distortion)
            .finish()
    }
}

/// Builds u_{t,T} from −u''/u' scaled by γ_t/γ_0 and w_{t,T} = Wang(γ_t, A_{t,T}).
pub fn construct_dynamic(
    u0: Arc<dyn Utility>,
    gamma0: f64,
    horizon: f64,
    market: &MarketCurve,
    gamma_path: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> Result<DynamicProcess> {
    if !(gamma0 > 0.0) {
        return Err(Error::domain(format!("initial distortion parameter must be positive, got {gamma0}")));
    }
    if !(horizon > 0.0 && horizon <= market.horizon()) {
        return Err(Error::domain(format!("horizon must lie in (0, {}]", market.horizon())));
    }
    if (gamma_path(0.0) - gamma0).abs() > 1e-12 * gamma0.max(1.0) {
        return Err(Error::domain(format!("γ path starts at {} instead of {gamma0}", gamma_path(0.0))));
    }
    Ok(DynamicProcess {
        horizon,
        market: market.clone(),
        u0,
        gamma0,
        gamma_path: Arc::new(gamma_path),
        frozen_distortion: false,
    })
}

impl DynamicProcess {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn gamma_at(&self, t: f64) -> f64 {
        (self.gamma_path)(t)
    }

    /// Keeps w_{t,T} = w_{0,T} at every t while the utility still follows
    /// the γ path. The result is not consistent unless γ is constant.
    pub fn freeze_distortion(mut self) -> Self {
        self.frozen_distortion = true;
        self
    }

    pub fn kernel_law(&self, t: f64) -> Result<KernelLaw> {
        KernelLaw::between(&self.market, t, self.horizon)
    }

    pub fn utility_at(&self, t: f64) -> Result<ScaledAversion> {
        let g = self.gamma_at(t);
        if !(g > 0.0) {
            return Err(Error::domain(format!("γ_t = {g} at t = {t}: the risk-aversion relation degenerates")));
        }
        ScaledAversion::new(self.u0.clone(), g / self.gamma0)
    }

    pub fn distortion_at(&self, t: f64) -> Result<Distortion> {
        if self.frozen_distortion {
            // Same function of p as at time 0.
            let shift = (self.gamma0 - 1.0) * self.kernel_law(0.0)?.vol();
            return Ok(Distortion::Wang { shift });
        }
        Ok(WangForward::new(self.gamma_at(t), self.kernel_law(t)?)?.distortion())
    }

    /// γ_t keeping w_{t,T} equal to w_{0,T} as a function of p.
    pub fn invariant_distortion_gamma(gamma0: f64, a_0t: f64, a_tt: f64) -> f64 {
        1.0 + (gamma0 - 1.0) * (a_0t / a_tt).sqrt()
    }
}

/// Solves at time 0 with budget x, then at t for several values of ρ_{0,t}
/// with the budget implied by the time-0 optimum, and returns the largest
/// gap between the two terminal maps over a ρ_{t,T}-quantile grid.
pub fn verify_dynamic_consistency(proc: &DynamicProcess, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0 && t < proc.horizon) {
        return Err(Error::domain(format!("need 0 < t < {}, got {t}", proc.horizon)));
    }
    let u0 = proc.utility_at(0.0)?;
    let w0 = proc.distortion_at(0.0)?;
    let law0 = proc.kernel_law(0.0)?;
    let first: BackwardSolution = backward::solve_multiplier(&u0, &w0, law0, x)?;
    let ut = proc.utility_at(t)?;
    let wt = proc.distortion_at(t)?;
    let law_t = proc.kernel_law(t)?;
    let early = KernelLaw::between(&proc.market, 0.0, t)?;
    let mut gap: f64 = 0.0;
    for z in [-1.0, 0.0, 1.0] {
        let r = early.at_score(z);
        let inherited = |rho: f64| first.terminal_wealth.eval(r * rho);
        // X_t = E[ρ_{t,T}·X_T | ρ_{0,t} = r]
        let budget = quadrature::gauss_kronrod_line(
            |y: f64| {
                let rho = law_t.at_score(y);
                rho * inherited(rho) * normal::pdf(y)
            },
            &[0.0, -law_t.vol()],
            Tolerance::new(0.0, 1e-13),
        )?;
        let second = backward::solve_multiplier(&ut, &wt, law_t, budget)?;
        for p in level_grid() {
            let rho = law_t.quantile(p)?;
            gap = gap.max((second.terminal_wealth.eval(rho) - inherited(rho)).abs());
        }
    }
    Ok(gap)
}

/// Monte Carlo estimate of the conditional value E[u_t(X*_t)·w'(F(ρ))] with
/// its standard error.
pub fn monte_carlo_value(pair: &ForwardPair, s: f64, t: f64, x: f64, n: usize, seed: u64) -> Result<(f64, f64)> {
    check_times(pair, s, t, x)?;
    let w = pair.distortion(s, t)?.distortion();
    let ut = pair.utility_at(t)?;
    let prospect = conditional_optimum(pair, s, t, x)?;
    const BLOCK: usize = 4096;
    let blocks: Vec<Moments> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut m = Moments::default();
            for _ in b * BLOCK..((b + 1) * BLOCK).min(n) {
                let z: f64 = StandardNormal.sample(&mut rng);
                // ρ = at_score(z) sits at level F(ρ) = Φ(−z)
                let weight = w.ln_derivative_at_score(-z).exp();
                m.push(ut.value(prospect.quantile_at_score(z)) * weight);
            }
            m
        })
        .collect();
    let mut total = Moments::default();
    blocks.iter().for_each(|m| total.merge(m));
    Ok((total.mean(), total.standard_error()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub s: f64,
    pub t: f64,
    pub x: f64,
    /// Policy label for margins; empty for residuals.
    pub policy: String,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub tolerance: f64,
    pub rows: Vec<ResidualRow>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckReport>,
    pub pass: bool,
}

impl VerificationReport {
    fn new(checks: Vec<CheckReport>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self { checks, pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationGrid {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
}

impl VerificationGrid {
    fn triples(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for &s in &self.s {
            for &t in &self.t {
                if s < t {
                    for &x in &self.x {
                        out.push((s, t, x));
                    }
                }
            }
        }
        out
    }
}

/// Value preservation, witness margins, conditional re-solve and the
/// classification of every w_{s,t}, over the grid. Tolerances are multiplied
/// by `tolerance_scale`.
pub fn verify_pair(pair: &ForwardPair, grid: &VerificationGrid, tolerance_scale: f64) -> Result<VerificationReport> {
    let triples = grid.triples();
    if triples.is_empty() {
        return Err(Error::domain("verification grid has no (s, t) pair with s < t"));
    }
    let value_tol = VALUE_TOLERANCE * tolerance_scale;
    let residuals = triples
        .par_iter()
        .map(|&(s, t, x)| {
            let r = verify_value_preservation(pair, s, t, x)?;
            Ok(row(s, t, x, "", r, r.abs() <= value_tol))
        })
        .collect::<Result<Vec<_>>>()?;

    let kappa = optimal_proportion(pair);
    let mut labelled: Vec<(String, WitnessPolicy<'static>, bool)> = vec![
        ("optimal".into(), WitnessPolicy::Optimal, true),
        ("cash".into(), WitnessPolicy::ConstantProportion(0.0), pair.is_degenerate()),
    ];
    if let Some(k) = kappa.filter(|k| *k > 0.0) {
        labelled.push(("half_optimal".into(), WitnessPolicy::ConstantProportion(0.5 * k), false));
        labelled.push(("double_optimal".into(), WitnessPolicy::ConstantProportion(2.0 * k), false));
    } else {
        labelled.push(("proportion_0.5".into(), WitnessPolicy::ConstantProportion(0.5), false));
    }
    let margin_rows = triples
        .par_iter()
        .map(|&(s, t, x)| {
            let policies: Vec<WitnessPolicy> = labelled.iter().map(|l| l.1).collect();
            let margins = verify_suboptimality(pair, s, t, x, &policies)?;
            Ok(labelled
                .iter()
                .zip(margins)
                .map(|((name, _, is_optimal), m)| {
                    let ok = if *is_optimal {
                        m.abs() <= OPTIMAL_MARGIN_TOLERANCE * tolerance_scale
                    } else {
                        m > 0.0
                    };
                    row(s, t, x, name, m, ok && m >= MARGIN_FLOOR * tolerance_scale)
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let resolve_tol = RESOLVE_TOLERANCE * tolerance_scale;
    let resolve = triples
        .par_iter()
        .map(|&(s, t, x)| {
            let g = verify_resolve(pair, s, t, x)?;
            Ok(row(s, t, x, "", g, g <= resolve_tol))
        })
        .collect::<Result<Vec<_>>>()?;

    let classes = triples
        .iter()
        .filter(|r| r.2 == grid.x[0])
        .map(|&(s, t, x)| {
            let law = pair.kernel_law(s, t)?;
            let w = pair.distortion(s, t)?.distortion();
            let c = distortion::check_degenerate(&w, &law, 999)?;
            let expected = if pair.is_degenerate() {
                DegeneracyClass::Degenerate
            } else {
                DegeneracyClass::Nondegenerate
            };
            let value = match expected {
                DegeneracyClass::Nondegenerate => c.fit_error,
                _ => c.min_margin,
            };
            Ok(row(s, t, x, &format!("{:?}", c.class).to_lowercase(), value, c.class == expected))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(VerificationReport::new(vec![
        check("value_preservation", value_tol, residuals),
        check("suboptimality", OPTIMAL_MARGIN_TOLERANCE * tolerance_scale, margin_rows),
        check("conditional_resolve", resolve_tol, resolve),
        check("classification", distortion::FAMILY_FIT_TOL, classes),
    ]))
}

fn row(s: f64, t: f64, x: f64, policy: &str, value: f64, pass: bool) -> ResidualRow {
    ResidualRow {
        s,
        t,
        x,
        policy: policy.into(),
        value,
        pass,
    }
}

fn check(name: &str, tolerance: f64, rows: Vec<ResidualRow>) -> CheckReport {
    CheckReport {
        name: name.into(),
        tolerance,
        pass: rows.iter().all(|r| r.pass),
        rows,
    }
}

/// Dynamic consistency at several intermediate times.
pub fn verify_dynamic(proc: &DynamicProcess, times: &[f64], x: f64, expect_consistent: bool, tolerance_scale: f64) -> Result<CheckReport> {
    let tol = RESOLVE_TOLERANCE * tolerance_scale;
    let rows = times
        .par_iter()
        .map(|&t| {
            let g = verify_dynamic_consistency(proc, t, x)?;
            let pass = if expect_consistent { g <= tol } else { g > 1e-3 };
            Ok(row(0.0, t, x, "", g, pass))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(check("dynamic_consistency", tol, rows))
}
