//! Nonnegative prospects described by their quantile functions.
//!
//! Every integral over a prospect is taken in the normal-score coordinate
//! `s`, with the prospect seen through `s ↦ q_X(Φ(s))`. Kernel-map prospects
//! `X = g(ρ)` with `g` nonincreasing have the exact score form
//! `g(exp(−A/2 − √A·s))`, so no quantile inversion is ever needed.

use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::market::KernelLaw;
use crate::normal;
use std::fmt;
use std::sync::Arc;

pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Prospect {
    Constant(f64),
    /// exp(log_mean + log_sd·Z).
    Lognormal { log_mean: f64, log_sd: f64 },
    /// g(ρ) for a nonincreasing map g and kernel law `law`.
    KernelMap { law: KernelLaw, map: ScalarMap },
    /// Arbitrary nondecreasing quantile function on (0, 1).
    Quantile(ScalarMap),
    /// Tabulated quantile function over probabilities.
    Table(MonotoneCubic),
}

impl fmt::Debug for Prospect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prospect::Constant(c) => write!(f, "Constant({c})"),
            Prospect::Lognormal { log_mean, log_sd } => {
                write!(f, "Lognormal {{ log_mean: {log_mean}, log_sd: {log_sd} }}")
            }
            Prospect::KernelMap { law, .. } => write!(f, "KernelMap {{ A: {} }}", law.a()),
            Prospect::Quantile(_) => write!(f, "Quantile(..)"),
            Prospect::Table(t) => write!(f, "Table({} nodes)", t.nodes().len()),
        }
    }
}

impl Prospect {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::domain(format!("prospect values must be finite and >= 0, got {c}")));
        }
        Ok(Prospect::Constant(c))
    }

    pub fn lognormal(log_mean: f64, log_sd: f64) -> Result<Self> {
        if !(log_sd >= 0.0) || !log_mean.is_finite() || !log_sd.is_finite() {
            return Err(Error::domain("lognormal prospect needs finite parameters, log_sd >= 0"));
        }
        Ok(Prospect::Lognormal { log_mean, log_sd })
    }

    pub fn kernel_map(law: KernelLaw, map: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Prospect::KernelMap {
            law,
            map: Arc::new(map),
        }
    }

    pub fn from_quantile(q: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Prospect::Quantile(Arc::new(q))
    }

    /// Uniform law on [0, 1].
    pub fn uniform() -> Self {
        Self::from_quantile(|p| p)
    }

    /// Tabulated quantile: probabilities strictly increasing in [0, 1],
    /// values nondecreasing and nonnegative.
    pub fn table(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.first().is_some_and(|v| *v < 0.0) || p.last().is_some_and(|v| *v > 1.0) {
            return Err(Error::Spec("quantile table probabilities must lie in [0, 1]".into()));
        }
        if q.iter().any(|v| *v < 0.0) {
            return Err(Error::Spec("quantile table values must be nonnegative".into()));
        }
        Ok(Prospect::Table(MonotoneCubic::new(p, q)?))
    }

    /// q_X(p) for p in (0, 1).
    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            Prospect::Constant(c) => *c,
            Prospect::Quantile(q) => q(p),
            Prospect::Table(t) => t.eval(p),
            _ => self.quantile_at_score(normal::quantile(p)),
        }
    }

    /// q_X(Φ(s)).
    pub fn quantile_at_score(&self, s: f64) -> f64 {
        match self {
            Prospect::Constant(c) => *c,
            Prospect::Lognormal { log_mean, log_sd } => (log_mean + log_sd * s).exp(),
            Prospect::KernelMap { law, map } => map(law.at_score(s)),
            Prospect::Quantile(q) => q(normal::cdf(s)),
            Prospect::Table(t) => t.eval(normal::cdf(s)),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Prospect::Constant(c) => Some(*c),
            Prospect::Lognormal { log_mean, log_sd } if *log_sd == 0.0 => Some(log_mean.exp()),
            _ => None,
        }
    }
}
