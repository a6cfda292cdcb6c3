//! Seeded Monte Carlo paths: Brownian driver, pricing kernel, closed-form
//! optimal wealth and strategy, and an Euler scheme for the wealth equation.
//!
//! Each path draws from its own ChaCha stream keyed by (seed, path index),
//! consumed step by step, so output does not depend on how paths are
//! scheduled across threads. Paths that overflow or hit zero wealth are
//! flagged and kept.

use crate::error::{Error, Result};
use crate::forward_utility::ForwardPair;
use crate::market::{CumulatedRisk, MarketCurve};
use crate::stats::Moments;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const TIME_MERGE: f64 = 1e-12;
const SUMMARY_CHUNK: usize = 4096;

/// Output times plus the finer grid on which Brownian increments are drawn.
/// Both contain 0 and every market breakpoint up to the last output time.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    driver: Vec<f64>,
    // driver index of each output time
    marks: Vec<usize>,
}

fn merged(mut points: Vec<f64>) -> Vec<f64> {
    points.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(points.len());
    for p in points {
        match out.last() {
            Some(&q) if p - q <= TIME_MERGE => {}
            _ => out.push(p),
        }
    }
    out
}

impl TimeGrid {
    /// `times` (any order, 0 added) merged with the market breakpoints.
    pub fn new(times: &[f64], market: &MarketCurve) -> Result<Self> {
        if times.iter().any(|t| !(*t >= 0.0 && *t <= market.horizon() + TIME_MERGE)) {
            return Err(Error::domain(format!("grid times must lie in [0, {}]", market.horizon())));
        }
        let end = times.iter().copied().fold(0.0, f64::max);
        if !(end > 0.0) {
            return Err(Error::domain("time grid needs a positive time"));
        }
        let mut points = times.to_vec();
        points.push(0.0);
        points.extend(market.breakpoints().into_iter().filter(|b| *b < end));
        let times = merged(points);
        Ok(Self {
            marks: (0..times.len()).collect(),
            driver: times.clone(),
            times,
        })
    }

    /// `n_steps` equal steps on [0, end], plus market breakpoints.
    pub fn uniform(n_steps: usize, end: f64, market: &MarketCurve) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::domain("uniform grid needs at least one step"));
        }
        let times: Vec<f64> = (0..=n_steps).map(|k| end * k as f64 / n_steps as f64).collect();
        Self::new(&times, market)
    }

    /// Draws increments on a finer uniform grid of step `step` and sums them
    /// over each output interval. Grids sharing a driver see the same
    /// Brownian path under the same seed.
    pub fn with_driver_step(mut self, step: f64) -> Result<Self> {
        let end = *self.times.last().unwrap();
        if !(step > 0.0) || step > end {
            return Err(Error::domain(format!("driver step must lie in (0, {end}], got {step}")));
        }
        let n = (end / step).round() as usize;
        let mut points: Vec<f64> = (0..=n).map(|k| (k as f64 * step).min(end)).collect();
        points.extend(&self.times);
        self.driver = merged(points);
        self.marks = self
            .times
            .iter()
            .map(|t| self.driver.partition_point(|d| *d < t - TIME_MERGE))
            .collect();
        Ok(self)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn driver(&self) -> &[f64] {
        &self.driver
    }
}

// Brownian increments over the output intervals, (K × d) row-major.
fn brownian_increments(seed: u64, path: usize, grid: &TimeGrid, d: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    let k = grid.times.len() - 1;
    let mut out = vec![0.0; k * d];
    let mut interval = 0;
    for j in 0..grid.driver.len() - 1 {
        while grid.marks[interval + 1] <= j {
            interval += 1;
        }
        let sd = (grid.driver[j + 1] - grid.driver[j]).sqrt();
        for a in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            out[interval * d + a] += sd * z;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ClosedForm,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathStatus {
    Ok,
    /// Wealth evaluation overflowed at this output index; later entries are NaN.
    Overflow(usize),
    /// Wealth reached zero at this output index and stays there.
    Absorbed(usize),
}

/// One simulated path on the output times. Vector quantities are stored
/// row-major with one row per time.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub id: usize,
    pub brownian: Vec<f64>,
    pub rho: Vec<f64>,
    pub wealth: Vec<f64>,
    pub strategy: Vec<f64>,
    pub status: PathStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub times: Vec<f64>,
    pub seed: u64,
    pub scheme: Scheme,
    pub n_assets: usize,
    pub paths: Vec<PathRecord>,
}

impl PathSet {
    pub fn flagged(&self) -> usize {
        self.paths.iter().filter(|p| p.status != PathStatus::Ok).count()
    }

    pub fn terminal_wealth(&self) -> impl Iterator<Item = f64> + '_ {
        self.paths.iter().map(|p| *p.wealth.last().unwrap())
    }

    /// Mean and standard error of ρ_t X_t per output time over unflagged paths.
    pub fn budget_summary(&self) -> BudgetSummary {
        let mut points = vec![Moments::default(); self.times.len()];
        for p in self.paths.iter().filter(|p| p.status == PathStatus::Ok) {
            for (m, (r, x)) in points.iter_mut().zip(p.rho.iter().zip(&p.wealth)) {
                m.push(r * x);
            }
        }
        BudgetSummary::new(&self.times, &points, self.flagged())
    }

    /// Bitwise equality, treating NaN entries as equal to themselves.
    pub fn bit_identical(&self, other: &PathSet) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.times == other.times
            && self.seed == other.seed
            && self.scheme == other.scheme
            && self.paths.len() == other.paths.len()
            && self.paths.iter().zip(&other.paths).all(|(a, b)| {
                a.id == b.id
                    && a.status == b.status
                    && bits(&a.brownian) == bits(&b.brownian)
                    && bits(&a.rho) == bits(&b.rho)
                    && bits(&a.wealth) == bits(&b.wealth)
                    && bits(&a.strategy) == bits(&b.strategy)
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPoint {
    pub t: f64,
    pub mean: f64,
    pub standard_error: f64,
    pub paths: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub points: Vec<BudgetPoint>,
    pub flagged: usize,
}

impl BudgetSummary {
    fn new(times: &[f64], moments: &[Moments], flagged: usize) -> Self {
        Self {
            points: times
                .iter()
                .zip(moments)
                .map(|(&t, m)| BudgetPoint {
                    t,
                    mean: m.mean(),
                    standard_error: m.standard_error(),
                    paths: m.n,
                })
                .collect(),
            flagged,
        }
    }

    /// Largest |mean − x| in units of standard error, ignoring t = 0.
    pub fn worst_z_score(&self, x: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.standard_error > 0.0)
            .map(|p| (p.mean - x).abs() / p.standard_error)
            .fold(0.0, f64::max)
    }
}

// Per-interval market data along the output grid.
struct Coefficients {
    lambda: Vec<Vec<f64>>,
    lambda_norm_sq: Vec<f64>,
    dt: Vec<f64>,
}

fn coefficients(market: &MarketCurve, times: &[f64]) -> Result<Coefficients> {
    let mut c = Coefficients {
        lambda: Vec::new(),
        lambda_norm_sq: Vec::new(),
        dt: Vec::new(),
    };
    for w in times.windows(2) {
        let seg = market.segment_at(w[0])?;
        c.lambda.push(seg.lambda().to_vec());
        c.lambda_norm_sq.push(seg.lambda_norm_sq());
        c.dt.push(w[1] - w[0]);
    }
    Ok(c)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// W_t, ρ_t and ∫λ'dW on the output times for one path.
struct Driver {
    brownian: Vec<f64>,
    rho: Vec<f64>,
    integral: Vec<f64>,
}

fn drive(inc: &[f64], grid: &TimeGrid, coef: &Coefficients, d: usize) -> Driver {
    let k = grid.times.len();
    let mut out = Driver {
        brownian: vec![0.0; k * d],
        rho: vec![1.0; k],
        integral: vec![0.0; k],
    };
    let mut ln_rho = 0.0;
    for i in 0..k - 1 {
        let dw = &inc[i * d..(i + 1) * d];
        for a in 0..d {
            out.brownian[(i + 1) * d + a] = out.brownian[i * d + a] + dw[a];
        }
        let ldw = dot(&coef.lambda[i], dw);
        ln_rho += -ldw - 0.5 * coef.lambda_norm_sq[i] * coef.dt[i];
        out.rho[i + 1] = ln_rho.exp();
        out.integral[i + 1] = out.integral[i] + ldw;
    }
    out
}

/// Optimal wealth and strategy paths from the closed form in the driving
/// Brownian motion.
pub fn simulate_optimal(pair: &ForwardPair, x0: f64, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<PathSet> {
    if !(x0 > 0.0) {
        return Err(Error::domain(format!("initial wealth must be positive, got {x0}")));
    }
    let market = pair.market();
    let d = market.n_assets();
    let coef = coefficients(market, &grid.times)?;
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|id| {
            let drv = drive(&brownian_increments(seed, id, grid, d), grid, &coef, d);
            let k = grid.times.len();
            let mut wealth = vec![f64::NAN; k];
            let mut strategy = vec![f64::NAN; k * d];
            let mut status = PathStatus::Ok;
            for (i, &t) in grid.times.iter().enumerate() {
                let step = pair
                    .optimal_wealth(t, x0, drv.integral[i])
                    .and_then(|x| Ok((x, pair.optimal_strategy(t, x0, drv.integral[i])?)));
                match step {
                    Ok((x, pi)) if x.is_finite() && pi.iter().all(|v| v.is_finite()) => {
                        wealth[i] = x;
                        strategy[i * d..(i + 1) * d].copy_from_slice(&pi);
                    }
                    Ok(_) | Err(Error::Overflow(_)) => {
                        status = PathStatus::Overflow(i);
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(PathRecord {
                id,
                brownian: drv.brownian,
                rho: drv.rho,
                wealth,
                strategy,
                status,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let set = PathSet {
        times: grid.times.clone(),
        seed,
        scheme: Scheme::ClosedForm,
        n_assets: d,
        paths,
    };
    if set.flagged() > 0 {
        log::warn!("{} of {n_paths} paths overflowed", set.flagged());
    }
    Ok(set)
}

/// E[ρ_t X*_t] per output time, streamed over fixed-size blocks of paths
/// so that memory stays flat and the summation order is fixed.
pub fn simulate_budget(pair: &ForwardPair, x0: f64, grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<BudgetSummary> {
    let market = pair.market();
    let d = market.n_assets();
    let coef = coefficients(market, &grid.times)?;
    let k = grid.times.len();
    let blocks = n_paths.div_ceil(SUMMARY_CHUNK);
    let partial = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut m = vec![Moments::default(); k];
            let mut flagged = 0usize;
            'paths: for id in b * SUMMARY_CHUNK..((b + 1) * SUMMARY_CHUNK).min(n_paths) {
                let drv = drive(&brownian_increments(seed, id, grid, d), grid, &coef, d);
                let mut row = Vec::with_capacity(k);
                for (i, &t) in grid.times.iter().enumerate() {
                    match pair.optimal_wealth(t, x0, drv.integral[i]) {
                        Ok(x) if x.is_finite() => row.push(drv.rho[i] * x),
                        Ok(_) | Err(Error::Overflow(_)) => {
                            flagged += 1;
                            continue 'paths;
                        }
                        Err(e) => return Err(e),
                    }
                }
                for (mi, v) in m.iter_mut().zip(row) {
                    mi.push(v);
                }
            }
            Ok((m, flagged))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![Moments::default(); k];
    let mut flagged = 0;
    for (m, f) in &partial {
        for (t, p) in total.iter_mut().zip(m) {
            t.merge(p);
        }
        flagged += f;
    }
    Ok(BudgetSummary::new(&grid.times, &total, flagged))
}

/// A trading rule: amounts held in each risky asset given time and wealth.
pub trait Policy: Sync {
    fn holdings(&self, t: f64, wealth: f64) -> Result<Vec<f64>>;
}

/// Holds nothing.
pub struct ZeroPolicy {
    pub n_assets: usize,
}

impl Policy for ZeroPolicy {
    fn holdings(&self, _t: f64, _wealth: f64) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.n_assets])
    }
}

/// Holds κ·X_t along the market's risky direction.
pub struct ConstantProportion<'a> {
    pub kappa: f64,
    pub market: &'a MarketCurve,
}

impl Policy for ConstantProportion<'_> {
    fn holdings(&self, t: f64, wealth: f64) -> Result<Vec<f64>> {
        let seg = self.market.segment_at(t)?;
        Ok(seg.risky_direction().iter().map(|d| self.kappa * wealth * d).collect())
    }
}

/// The forward optimum in feedback form.
pub struct OptimalFeedback<'a>(pub &'a ForwardPair);

impl Policy for OptimalFeedback<'_> {
    fn holdings(&self, t: f64, wealth: f64) -> Result<Vec<f64>> {
        self.0.feedback_strategy(t, wealth)
    }
}

/// Euler–Maruyama for dX = π'σ(λ dt + dW), driven by the same increments as
/// [`simulate_optimal`] under the same seed and driver grid.
pub fn euler_wealth(
    policy: &dyn Policy,
    market: &MarketCurve,
    x0: f64,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet> {
    if !(x0 > 0.0) {
        return Err(Error::domain(format!("initial wealth must be positive, got {x0}")));
    }
    let d = market.n_assets();
    let coef = coefficients(market, &grid.times)?;
    let sigmas = grid.times[..grid.times.len() - 1]
        .iter()
        .map(|&t| Ok(market.segment_at(t)?.sigma().clone()))
        .collect::<Result<Vec<_>>>()?;
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|id| {
            let inc = brownian_increments(seed, id, grid, d);
            let drv = drive(&inc, grid, &coef, d);
            let k = grid.times.len();
            let mut wealth = vec![0.0; k];
            let mut strategy = vec![0.0; k * d];
            let mut status = PathStatus::Ok;
            wealth[0] = x0;
            for i in 0..k - 1 {
                let x = wealth[i];
                if status != PathStatus::Ok {
                    wealth[i + 1] = x;
                    continue;
                }
                let pi = policy.holdings(grid.times[i], x)?;
                strategy[i * d..(i + 1) * d].copy_from_slice(&pi);
                // π'σ(λΔt + ΔW)
                let mut gain = 0.0;
                for a in 0..d {
                    let mut load = 0.0;
                    for b in 0..d {
                        load += pi[b] * sigmas[i][(b, a)];
                    }
                    gain += load * (coef.lambda[i][a] * coef.dt[i] + inc[i * d + a]);
                }
                let next = x + gain;
                if !next.is_finite() {
                    status = PathStatus::Overflow(i + 1);
                    wealth[i + 1] = f64::NAN;
                } else if next <= 0.0 {
                    status = PathStatus::Absorbed(i + 1);
                    wealth[i + 1] = 0.0;
                } else {
                    wealth[i + 1] = next;
                }
            }
            if status == PathStatus::Ok {
                let pi = policy.holdings(grid.times[k - 1], wealth[k - 1])?;
                strategy[(k - 1) * d..].copy_from_slice(&pi);
            }
            Ok(PathRecord {
                id,
                brownian: drv.brownian,
                rho: drv.rho,
                wealth,
                strategy,
                status,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathSet {
        times: grid.times.clone(),
        seed,
        scheme: Scheme::Euler,
        n_assets: d,
        paths,
    })
}

/// Samples X*_t given X*_s = xs by drawing ρ_{s,t} from its law.
pub fn conditional_resample(pair: &ForwardPair, s: f64, xs: f64, t: f64, n_paths: usize, seed: u64) -> Result<Vec<f64>> {
    if !(s >= 0.0 && s < t) || !(xs > 0.0) {
        return Err(Error::domain(format!("need 0 <= s < t and xs > 0, got s={s}, t={t}, xs={xs}")));
    }
    if pair.is_degenerate() || pair.market().accumulate_risk(s, t)? == 0.0 {
        return Ok(vec![xs; n_paths]);
    }
    let law = pair.kernel_law(s, t)?;
    let blocks = n_paths.div_ceil(SUMMARY_CHUNK);
    let out = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            (b * SUMMARY_CHUNK..((b + 1) * SUMMARY_CHUNK).min(n_paths))
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    pair.conditional_optimal_wealth(s, t, xs, law.at_score(z))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_utility::DiracMixture;
    use crate::stats;
    use nalgebra::DMatrix;

    fn scalar_market() -> MarketCurve {
        MarketCurve::constant_scalar(0.3, 0.2, 1.0).unwrap()
    }

    fn two_segment_market() -> MarketCurve {
        MarketCurve::new(
            1.0,
            vec![
                (0.0, 0.4, vec![0.3, 0.1], DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.05, 0.25])),
                (0.4, 1.0, vec![0.2, 0.25], DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.0, 0.2])),
            ],
        )
        .unwrap()
    }

    #[test]
    fn grid_merges_breakpoints() {
        let g = TimeGrid::new(&[1.0, 0.5], &two_segment_market()).unwrap();
        assert_eq!(g.times(), &[0.0, 0.4, 0.5, 1.0]);
        let g = TimeGrid::uniform(4, 1.0, &scalar_market()).unwrap().with_driver_step(1.0 / 64.0).unwrap();
        assert_eq!(g.driver().len(), 65);
        assert_eq!(g.marks, vec![0, 16, 32, 48, 64]);
        assert!(TimeGrid::new(&[2.0], &scalar_market()).is_err());
    }

    #[test]
    fn driver_aggregation_is_consistent() {
        let m = scalar_market();
        let coarse = TimeGrid::uniform(4, 1.0, &m).unwrap().with_driver_step(1.0 / 64.0).unwrap();
        let fine = TimeGrid::uniform(64, 1.0, &m).unwrap();
        let a = brownian_increments(9, 3, &coarse, 1);
        let b = brownian_increments(9, 3, &fine, 1);
        for i in 0..4 {
            let s: f64 = b[i * 16..(i + 1) * 16].iter().sum();
            assert!((a[i] - s).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_pair_is_constant() {
        let pair = ForwardPair::new(0.0, DiracMixture::crra(2.0).unwrap(), two_segment_market()).unwrap();
        let grid = TimeGrid::uniform(10, 1.0, pair.market()).unwrap();
        let set = simulate_optimal(&pair, 1.5, &grid, 50, 1).unwrap();
        for p in &set.paths {
            assert!(p.wealth.iter().all(|x| *x == 1.5));
            assert!(p.strategy.iter().all(|x| *x == 0.0));
        }
        let euler = euler_wealth(&ZeroPolicy { n_assets: 2 }, pair.market(), 1.5, &grid, 20, 1).unwrap();
        assert!(euler.paths.iter().all(|p| p.wealth.iter().all(|x| *x == 1.5)));
    }

    #[test]
    fn crra_paths_match_closed_form() {
        let (alpha, gamma, x) = (2.0, 1.5, 1.3);
        let market = two_segment_market();
        let pair = ForwardPair::new(gamma, DiracMixture::crra(alpha).unwrap(), market.clone()).unwrap();
        let grid = TimeGrid::uniform(8, 1.0, &market).unwrap();
        let set = simulate_optimal(&pair, x, &grid, 200, 3).unwrap();
        let k = gamma / alpha;
        for p in &set.paths {
            let mut m = 0.0;
            for (i, &t) in set.times.iter().enumerate() {
                if i > 0 {
                    let seg = market.segment_at(set.times[i - 1]).unwrap();
                    let dw: Vec<f64> = (0..2).map(|a| p.brownian[i * 2 + a] - p.brownian[(i - 1) * 2 + a]).collect();
                    m += dot(seg.lambda(), &dw);
                }
                let a = market.accumulate_risk(0.0, t).unwrap();
                let expected = x * (k * (1.0 - gamma / (2.0 * alpha)) * a + k * m).exp();
                assert!((p.wealth[i] / expected - 1.0).abs() < 1e-12);
                let dir = market.segment_at(t).unwrap().risky_direction();
                for a in 0..2 {
                    assert!((p.strategy[i * 2 + a] - k * dir[a] * expected).abs() < 1e-11 * expected.max(1.0));
                }
            }
        }
    }

    #[test]
    fn two_dirac_paths_match_example() {
        // X*_t = h(z₀ + γA_t + γM_t, γ²A_t) with h(z, t) = Σ exp(z y − y² t/2)
        let theta = 0.5;
        let gamma = 0.8;
        let market = scalar_market();
        let pair = ForwardPair::new(gamma, DiracMixture::two_dirac(theta).unwrap(), market.clone()).unwrap();
        let grid = TimeGrid::uniform(5, 1.0, &market).unwrap();
        let x = 0.7;
        let set = simulate_optimal(&pair, x, &grid, 100, 5).unwrap();
        let (y1, y2) = (1.0 / (1.0 - theta), 2.0 / (1.0 - theta));
        let h = |z: f64, t: f64| (z * y1 - y1 * y1 * t / 2.0).exp() + (z * y2 - y2 * y2 * t / 2.0).exp();
        // initial score from the quadratic in e^{z y1}
        let z0 = ((-1.0 + (1.0f64 + 4.0 * x).sqrt()) / 2.0).ln() / y1;
        for p in &set.paths {
            for (i, &t) in set.times.iter().enumerate() {
                let a = 0.09 * t;
                let m = 0.3 * p.brownian[i];
                let expected = h(z0 + gamma * a + gamma * m, gamma * gamma * a);
                assert!((p.wealth[i] / expected - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let pair = ForwardPair::new(1.2, DiracMixture::two_dirac(0.3).unwrap(), two_segment_market()).unwrap();
        let grid = TimeGrid::uniform(16, 1.0, pair.market()).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_optimal(&pair, 1.0, &grid, 500, 77).unwrap())
        };
        let one = run(1);
        assert!(one.bit_identical(&run(4)));
        assert!(one.bit_identical(&run(16)));
    }

    #[test]
    fn budget_identity_holds() {
        let pair = ForwardPair::new(2.0, DiracMixture::crra(2.0).unwrap(), two_segment_market()).unwrap();
        let grid = TimeGrid::new(&[0.25, 0.5, 1.0], pair.market()).unwrap();
        let summary = simulate_budget(&pair, 1.0, &grid, 100_000, 12).unwrap();
        assert_eq!(summary.flagged, 0);
        assert!(summary.worst_z_score(1.0) < 4.0, "{summary:?}");
        let set = simulate_optimal(&pair, 1.0, &grid, 2_000, 12).unwrap();
        assert!(set.budget_summary().worst_z_score(1.0) < 4.0);
    }

    #[test]
    fn euler_replay_is_close() {
        let pair = ForwardPair::new(1.0, DiracMixture::crra(2.0).unwrap(), scalar_market()).unwrap();
        let grid = TimeGrid::uniform(1000, 1.0, pair.market()).unwrap();
        let closed = simulate_optimal(&pair, 1.0, &grid, 500, 4).unwrap();
        let euler = euler_wealth(&OptimalFeedback(&pair), pair.market(), 1.0, &grid, 500, 4).unwrap();
        let gaps: Vec<f64> = closed.terminal_wealth().zip(euler.terminal_wealth()).map(|(a, b)| (a - b).powi(2)).collect();
        let rms = (gaps.iter().sum::<f64>() / gaps.len() as f64).sqrt();
        assert!(rms < 1e-2, "rms {rms}");
    }

    // σ is not symmetric here, so a position along σ⁻¹λ instead of (σ')⁻¹λ
    // would drift away from the closed form.
    #[test]
    fn euler_replay_two_assets() {
        let pair = ForwardPair::new(2.0, DiracMixture::crra(2.0).unwrap(), two_segment_market()).unwrap();
        let grid = TimeGrid::uniform(2000, 1.0, pair.market()).unwrap();
        let closed = simulate_optimal(&pair, 1.0, &grid, 300, 12).unwrap();
        let euler = euler_wealth(&OptimalFeedback(&pair), pair.market(), 1.0, &grid, 300, 12).unwrap();
        let rms = (closed.terminal_wealth().zip(euler.terminal_wealth()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            / 300.0)
            .sqrt();
        assert!(rms < 1e-2, "rms {rms}");
    }

    #[test]
    fn conditional_resample_log_and_tower() {
        let pair = ForwardPair::new(1.5, DiracMixture::log(), scalar_market()).unwrap();
        let xs = 1.2;
        let sample = conditional_resample(&pair, 0.2, xs, 0.9, 20_000, 3).unwrap();
        // log utility: X_t = xs ρ^{−γ}/E[ρ^{1−γ}] has mean xs·E[ρ^{−γ}]/E[ρ^{1−γ}]
        let law = pair.kernel_law(0.2, 0.9).unwrap();
        let expected = xs * law.power_mean(-1.5) / law.power_mean(-0.5);
        let (mean, se) = stats::mean_se(&sample);
        assert!((mean - expected).abs() < 4.0 * se);

        let one = conditional_resample(&pair, 0.0, xs, 1.0, 5_000, 8).unwrap();
        let mid = conditional_resample(&pair, 0.0, xs, 0.5, 5_000, 9).unwrap();
        let two: Vec<f64> = mid
            .iter()
            .enumerate()
            .map(|(i, &x)| conditional_resample(&pair, 0.5, x, 1.0, 1, 10 + i as u64).unwrap()[0])
            .collect();
        let d = stats::ks_statistic(&one, &two);
        assert!(d < stats::ks_critical(0.01, one.len(), two.len()), "KS {d}");

        let near = conditional_resample(&pair, 0.5, xs, 0.5 + 1e-12, 100, 1).unwrap();
        assert!(near.iter().all(|x| (x - xs).abs() < 1e-4));
        let flat = ForwardPair::new(0.0, DiracMixture::log(), scalar_market()).unwrap();
        assert!(conditional_resample(&flat, 0.0, xs, 1.0, 10, 1).unwrap().iter().all(|x| *x == xs));
    }
}
