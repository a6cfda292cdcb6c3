//! Scenario configuration: one JSON file per run.

use frdu::distortion::DistortionSpec;
use frdu::forward_utility::MixtureSpec;
use frdu::market::MarketSpec;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub market: MarketSpec,
    pub mixture: MixtureSpec,
    pub gamma: f64,
    /// Defaults to the market horizon.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default)]
    pub backward: Option<BackwardConfig>,
    #[serde(default)]
    pub classify: Option<ClassifyConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Grids {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    /// Probability nodes for distortion tables, including 0 and 1.
    pub p: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            s: vec![0.0, 0.25, 0.5],
            t: vec![0.5, 1.0],
            x: vec![0.5, 1.0, 2.0],
            p: (0..=2000).map(|i| i as f64 / 2000.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub x0: f64,
    /// Replay the feedback strategy by Euler instead of the closed form.
    #[serde(default)]
    pub euler: bool,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Checks {
    pub value_preservation: bool,
    pub suboptimality: bool,
    pub conditional_resolve: bool,
    pub classification: bool,
}

impl Default for Checks {
    fn default() -> Self {
        Self {
            value_preservation: true,
            suboptimality: true,
            conditional_resolve: true,
            classification: true,
        }
    }
}

impl Checks {
    pub fn enabled(&self, name: &str) -> bool {
        match name {
            "value_preservation" => self.value_preservation,
            "suboptimality" => self.suboptimality,
            "conditional_resolve" => self.conditional_resolve,
            "classification" => self.classification,
            _ => true,
        }
    }
}

/// Backward problem: maximise the RDU value of the time-0 forward utility
/// under `distortion` at the horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackwardConfig {
    pub distortion: DistortionSpec,
    #[serde(default = "one")]
    pub initial_wealth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    pub distortion: DistortionSpec,
    #[serde(default)]
    pub s: f64,
    /// Defaults to the horizon.
    #[serde(default)]
    pub t: Option<f64>,
}

impl ScenarioConfig {
    /// Reads and validates `path`; `seed` replaces the simulation seed.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        let mut cfg: ScenarioConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.into(),
            line: e.line(),
            column: e.column(),
            message: e
                .to_string()
                .trim_end_matches(&format!(" at line {} column {}", e.line(), e.column()))
                .to_string(),
        })?;
        if let (Some(seed), Some(sim)) = (seed, cfg.simulation.as_mut()) {
            sim.seed = Some(seed);
        }
        cfg.validate().map_err(|message| ConfigError::Invalid {
            path: path.into(),
            message,
        })?;
        Ok(cfg)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon.unwrap_or(self.market.horizon)
    }

    fn validate(&self) -> Result<(), String> {
        let h = self.horizon();
        if !(h > 0.0 && h <= self.market.horizon) {
            return Err(format!("horizon {h} must lie in (0, {}]", self.market.horizon));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(format!("gamma must be finite and >= 0, got {}", self.gamma));
        }
        for (name, grid) in [("s", &self.grids.s), ("t", &self.grids.t)] {
            if let Some(v) = grid.iter().find(|v| !(**v >= 0.0 && **v <= h)) {
                return Err(format!("grids.{name} value {v} outside [0, {h}]"));
            }
        }
        if let Some(v) = self.grids.x.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(format!("grids.x value {v} must be positive"));
        }
        let p = &self.grids.p;
        if p.len() < 3 || p[0] != 0.0 || p[p.len() - 1] != 1.0 || p.windows(2).any(|w| !(w[0] < w[1])) {
            return Err("grids.p must increase strictly from 0 to 1 with at least 3 nodes".into());
        }
        if let Some(sim) = &self.simulation {
            if sim.seed.is_none() {
                return Err("simulation.seed is required".into());
            }
            if sim.n_paths == 0 || sim.n_steps == 0 {
                return Err("simulation.n_paths and simulation.n_steps must be positive".into());
            }
        }
        if let Some(c) = &self.classify {
            let t = c.t.unwrap_or(h);
            if !(c.s >= 0.0 && c.s < t && t <= h) {
                return Err(format!("classify window [{}, {t}] must satisfy 0 <= s < t <= {h}", c.s));
            }
        }
        Ok(())
    }
}
