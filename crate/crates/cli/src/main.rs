mod config;

use clap::{Parser, Subcommand};
use config::{ConfigError, ScenarioConfig};
use frdu::backward;
use frdu::distortion::{check_degenerate, DistortionSpec};
use frdu::forward_utility::ForwardPair;
use frdu::market::{KernelLaw, MarketCurve};
use frdu::simulate::{self, OptimalFeedback, PathSet, TimeGrid};
use frdu::utility::Utility;
use frdu::verify::{self, VerificationGrid};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "frdu", version, about = "Forward rank-dependent performance criteria: scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for simulation and verification.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Multiplies every verification tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    tolerance_scale: f64,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Tabulate u_t on an x grid and w_{s,t} on the p grid.
    Construct,
    /// Simulate optimal wealth and strategy paths.
    Simulate,
    /// Run the verification checks and write a report.
    Verify,
    /// Solve the backward RDU problem at the horizon.
    SolveBackward,
    /// Classify a distortion against the kernel law.
    Classify,
}

enum Failure {
    Config(String),
    Checks(PathBuf),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<frdu::Error> for Failure {
    fn from(e: frdu::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FRDU_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Checks(report)) => {
            eprintln!("checks failed; report at {}", report.display());
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let path = cli.config.as_deref().ok_or_else(|| Failure::Config("--config <path> is required".into()))?;
    if !(cli.tolerance_scale > 0.0 && cli.tolerance_scale.is_finite()) {
        return Err(Failure::Config(format!("--tolerance-scale must be positive, got {}", cli.tolerance_scale)));
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    let cfg = ScenarioConfig::load(path, cli.seed)?;
    let market = cfg.market.build().map_err(|e| invalid(path, e))?;
    let mixture = cfg.mixture.build().map_err(|e| invalid(path, e))?;
    let pair = ForwardPair::new(cfg.gamma, mixture, market).map_err(|e| invalid(path, e))?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("frdu-out"));
    fs::create_dir_all(&out)?;
    log::info!("writing artifacts to {}", out.display());
    match cli.command {
        Command::Construct => construct(&cfg, &pair, &out),
        Command::Simulate => simulate(path, &cfg, &pair, &out),
        Command::Verify => verify(&cfg, &pair, &out, cli.tolerance_scale),
        Command::SolveBackward => solve_backward(path, &cfg, &pair, &out),
        Command::Classify => classify(path, &cfg, &pair, &out),
    }
}

fn invalid(path: &Path, e: frdu::Error) -> Failure {
    Failure::Config(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Outcome {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Nodes on which u_t is tabulated: log-spaced from 0.05 to 20.
fn utility_table_nodes() -> Vec<f64> {
    let (lo, hi, n) = (0.05f64.ln(), 20f64.ln(), 801);
    (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()).collect()
}

fn table_times(cfg: &ScenarioConfig) -> Vec<f64> {
    let mut times: Vec<f64> = std::iter::once(0.0).chain(cfg.grids.t.iter().copied()).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

fn construct(cfg: &ScenarioConfig, pair: &ForwardPair, out: &Path) -> Outcome {
    let mut w = csv::Writer::from_path(out.join("utility.csv"))?;
    w.write_record(["t", "x", "u", "u_x"])?;
    for t in table_times(cfg) {
        let u = pair.utility_at(t)?;
        for x in utility_table_nodes() {
            w.serialize((t, x, u.value(x), u.marginal(x)))?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("distortion.csv"))?;
    w.write_record(["s", "t", "p", "w"])?;
    for &s in &cfg.grids.s {
        for &t in &cfg.grids.t {
            if s < t {
                let d = pair.distortion(s, t)?;
                for &p in &cfg.grids.p {
                    w.serialize((s, t, p, d.eval(p)))?;
                }
            }
        }
    }
    w.flush()?;
    println!("wrote {} and {}", out.join("utility.csv").display(), out.join("distortion.csv").display());
    Ok(())
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    seed: u64,
    scheme: simulate::Scheme,
    n_paths: usize,
    n_steps: usize,
    x0: f64,
    flagged: Vec<(usize, simulate::PathStatus)>,
    worst_budget_z_score: f64,
    budget: &'a simulate::BudgetSummary,
}

fn simulate(path: &Path, cfg: &ScenarioConfig, pair: &ForwardPair, out: &Path) -> Outcome {
    let sim = cfg
        .simulation
        .as_ref()
        .ok_or_else(|| Failure::Config(format!("{}: no `simulation` section", path.display())))?;
    let seed = sim.seed.expect("validated");
    let grid = TimeGrid::uniform(sim.n_steps, cfg.horizon(), pair.market())?;
    let set = if sim.euler {
        simulate::euler_wealth(&OptimalFeedback(pair), pair.market(), sim.x0, &grid, sim.n_paths, seed)?
    } else {
        simulate::simulate_optimal(pair, sim.x0, &grid, sim.n_paths, seed)?
    };
    let csv_path = out.join("paths.csv");
    write_paths(&csv_path, &set, pair.market())?;
    let budget = set.budget_summary();
    let summary = SimulationSummary {
        seed,
        scheme: set.scheme,
        n_paths: sim.n_paths,
        n_steps: sim.n_steps,
        x0: sim.x0,
        flagged: set
            .paths
            .iter()
            .filter(|p| p.status != simulate::PathStatus::Ok)
            .map(|p| (p.id, p.status))
            .collect(),
        worst_budget_z_score: budget.worst_z_score(sim.x0),
        budget: &budget,
    };
    write_json(&out.join("summary.json"), &summary)?;
    if !summary.flagged.is_empty() {
        log::warn!("{} paths flagged", summary.flagged.len());
    }
    println!("wrote {} paths to {}", set.paths.len(), csv_path.display());
    Ok(())
}

fn write_paths(path: &Path, set: &PathSet, market: &MarketCurve) -> Outcome {
    let d = market.n_assets();
    let mut header = vec!["path_id".to_string(), "t".into()];
    if d == 1 {
        header.push("W".into());
    } else {
        header.extend((1..=d).map(|i| format!("W_{i}")));
    }
    header.extend(["rho".into(), "X_star".into()]);
    header.extend((1..=d).map(|i| format!("pi_star_{i}")));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for p in &set.paths {
        for (k, &t) in set.times.iter().enumerate() {
            row.clear();
            row.push(p.id.to_string());
            row.push(t.to_string());
            row.extend(p.brownian[k * d..(k + 1) * d].iter().map(f64::to_string));
            row.push(p.rho[k].to_string());
            row.push(p.wealth[k].to_string());
            row.extend(p.strategy[k * d..(k + 1) * d].iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn verify(cfg: &ScenarioConfig, pair: &ForwardPair, out: &Path, tolerance_scale: f64) -> Outcome {
    let grid = VerificationGrid {
        s: cfg.grids.s.clone(),
        t: cfg.grids.t.clone(),
        x: cfg.grids.x.clone(),
    };
    let mut report = verify::verify_pair(pair, &grid, tolerance_scale)?;
    report.checks.retain(|c| cfg.checks.enabled(&c.name));
    report.pass = report.checks.iter().all(|c| c.pass);

    let report_path = out.join("report.json");
    write_json(&report_path, &report)?;
    let mut w = csv::Writer::from_path(out.join("residuals.csv"))?;
    w.write_record(["check", "s", "t", "x", "policy", "value", "tolerance", "pass"])?;
    for c in &report.checks {
        for r in &c.rows {
            w.serialize((&c.name, r.s, r.t, r.x, &r.policy, r.value, c.tolerance, r.pass))?;
        }
    }
    w.flush()?;
    for c in &report.checks {
        println!("{}: {}", c.name, if c.pass { "pass" } else { "FAIL" });
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Checks(report_path))
    }
}

#[derive(Serialize)]
struct BackwardDump {
    initial_wealth: f64,
    multiplier: f64,
    achieved_budget: f64,
    degenerate: bool,
    branch: String,
    kernel_a: f64,
}

fn solve_backward(path: &Path, cfg: &ScenarioConfig, pair: &ForwardPair, out: &Path) -> Outcome {
    let bc = cfg
        .backward
        .as_ref()
        .ok_or_else(|| Failure::Config(format!("{}: no `backward` section", path.display())))?;
    let law = pair.kernel_law(0.0, cfg.horizon())?;
    let w = bc.distortion.build(&law).map_err(|e| invalid(path, e))?;
    let u = pair.utility_at(0.0)?;
    let sol = backward::solve_multiplier(&u, &w, law, bc.initial_wealth)?;
    let map = &sol.terminal_wealth;
    write_json(
        &out.join("backward.json"),
        &BackwardDump {
            initial_wealth: bc.initial_wealth,
            multiplier: sol.multiplier,
            achieved_budget: sol.achieved_budget,
            degenerate: sol.degenerate,
            branch: format!("{:?}", map.branch()).to_lowercase(),
            kernel_a: law.a(),
        },
    )?;
    let mut wtr = csv::Writer::from_path(out.join("terminal_wealth.csv"))?;
    wtr.write_record(["p", "rho", "X_star"])?;
    for &p in cfg.grids.p.iter().filter(|p| **p > 0.0 && **p < 1.0) {
        let rho = law.quantile(p)?;
        wtr.serialize((p, rho, map.eval(rho)))?;
    }
    wtr.flush()?;
    println!(
        "multiplier {} budget {} branch {:?}{}",
        sol.multiplier,
        sol.achieved_budget,
        map.branch(),
        if sol.degenerate { " (degenerate)" } else { "" }
    );
    Ok(())
}

fn kernel_window(cfg: &ScenarioConfig, pair: &ForwardPair) -> frdu::Result<(f64, f64, KernelLaw)> {
    let (s, t) = match &cfg.classify {
        Some(c) => (c.s, c.t.unwrap_or(cfg.horizon())),
        None => (0.0, cfg.horizon()),
    };
    Ok((s, t, pair.kernel_law(s, t)?))
}

#[derive(Serialize)]
struct ClassifyDump {
    s: f64,
    t: f64,
    kernel_a: f64,
    distortion: DistortionSpec,
    #[serde(flatten)]
    result: frdu::distortion::Classification,
}

fn classify(path: &Path, cfg: &ScenarioConfig, pair: &ForwardPair, out: &Path) -> Outcome {
    let (s, t, law) = kernel_window(cfg, pair)?;
    let spec = cfg
        .classify
        .as_ref()
        .map(|c| c.distortion.clone())
        .unwrap_or(DistortionSpec::WangForward { gamma: cfg.gamma });
    let w = spec.build(&law).map_err(|e| invalid(path, e))?;
    let result = check_degenerate(&w, &law, 999)?;
    let name = serde_json::to_value(result.class)?;
    write_json(
        &out.join("classification.json"),
        &ClassifyDump {
            s,
            t,
            kernel_a: law.a(),
            distortion: spec,
            result,
        },
    )?;
    println!("{}", name.as_str().unwrap_or_default());
    Ok(())
}
