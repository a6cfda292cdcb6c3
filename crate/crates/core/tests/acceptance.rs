//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use frdu::backward::{self, concave_envelope, GridFunction};
use frdu::distortion::{self, check_degenerate, wang_eval, wang_eval_integral, DegeneracyClass, Distortion, WangForward};
use frdu::forward_utility::{forward_u, DiracMixture, ForwardPair};
use frdu::market::{CumulatedRisk, KernelLaw, MarketCurve};
use frdu::prospect::Prospect;
use frdu::simulate::{self, OptimalFeedback, TimeGrid};
use frdu::utility::{Crra, Utility};
use frdu::verify::{self, construct_dynamic, DynamicProcess, WitnessPolicy};
use rand::{Rng, SeedableRng};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn market(lambda: f64) -> MarketCurve {
    MarketCurve::constant_scalar(lambda, 0.2, 1.0).unwrap()
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_secs as f64, || {
        format!("took {:.1}s, limit {limit_secs}s", elapsed.as_secs_f64())
    })
}

fn wang_cross_representation() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut combos = 0;
    for gamma in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0] {
        for a in [0.01, 0.09, 0.25, 1.0] {
            let law = KernelLaw::new(a).unwrap();
            let w = WangForward::new(gamma, law).unwrap();
            for i in 1..=999 {
                let p = i as f64 / 1000.0;
                let integral = wang_eval_integral(gamma, &law, p).map_err(|e| e.to_string())?;
                worst = worst.max((integral - wang_eval(&w, p)).abs());
            }
            combos += 1;
        }
    }
    within(start.elapsed(), 5)?;
    ensure(worst < 1e-8, || format!("max gap {worst:e}"))?;
    Ok(format!("{combos} (γ, A) pairs, max gap {worst:.1e}, {:.2}s", start.elapsed().as_secs_f64()))
}

fn pairs() -> Vec<(String, ForwardPair)> {
    let mut out = Vec::new();
    for gamma in [0.5, 1.0, 2.0] {
        for (name, mix) in [("crra2", DiracMixture::crra(2.0).unwrap()), ("log", DiracMixture::log())] {
            out.push((format!("{name} γ={gamma}"), ForwardPair::new(gamma, mix, market(0.3)).unwrap()));
        }
    }
    out
}

fn grid_triples() -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    for s in [0.0, 0.25, 0.5] {
        for t in [0.5, 1.0] {
            if s < t {
                for x in [0.5, 1.0, 2.0] {
                    out.push((s, t, x));
                }
            }
        }
    }
    out
}

fn value_preservation() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for (name, pair) in pairs() {
        for (s, t, x) in grid_triples() {
            let r = verify::verify_value_preservation(&pair, s, t, x).map_err(|e| format!("{name}: {e}"))?;
            ensure(r.abs() < 1e-6, || format!("{name} s={s} t={t} x={x}: residual {r:e}"))?;
            worst = worst.max(r.abs());
            n += 1;
        }
    }
    within(start.elapsed(), 30)?;
    Ok(format!("{n} cases, max |residual| {worst:.1e}, {:.2}s", start.elapsed().as_secs_f64()))
}

fn suboptimality_margins() -> Outcome {
    let start = Instant::now();
    let (mut smallest, mut worst_opt): (f64, f64) = (f64::INFINITY, 0.0);
    for (name, pair) in pairs() {
        let k = verify::optimal_proportion(&pair).unwrap();
        let policies = [
            WitnessPolicy::ConstantProportion(k),
            WitnessPolicy::ConstantProportion(0.0),
            WitnessPolicy::ConstantProportion(0.5 * k),
            WitnessPolicy::ConstantProportion(2.0 * k),
        ];
        for (s, t, x) in grid_triples() {
            let m = verify::verify_suboptimality(&pair, s, t, x, &policies).map_err(|e| format!("{name}: {e}"))?;
            ensure(m[0].abs() < 1e-6, || format!("{name} s={s} t={t} x={x}: optimal margin {:e}", m[0]))?;
            ensure(m[1..].iter().all(|v| *v > 1e-6), || format!("{name} s={s} t={t} x={x}: margins {m:?}"))?;
            worst_opt = worst_opt.max(m[0].abs());
            smallest = m[1..].iter().copied().fold(smallest, f64::min);
        }
    }
    within(start.elapsed(), 30)?;
    Ok(format!(
        "smallest witness margin {smallest:.2e}, max |optimal margin| {worst_opt:.1e}, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn merton_recovery() -> Outcome {
    let law = KernelLaw::new(0.09).unwrap();
    let w = Distortion::Identity;
    let (mut worst_map, mut worst_budget): (f64, f64) = (0.0, 0.0);
    for alpha in [0.5, 2.0, 4.0] {
        for x in [0.5, 1.0, 2.0] {
            let u = Crra::new(alpha).unwrap();
            let sol = backward::solve_multiplier(&u, &w, law, x).map_err(|e| e.to_string())?;
            let lambda = x.powf(-alpha) * law.power_mean((alpha - 1.0) / alpha).powf(alpha);
            for i in 1..100 {
                let rho = law.quantile(i as f64 / 100.0).unwrap();
                let merton = (lambda * rho).powf(-1.0 / alpha);
                worst_map = worst_map.max((sol.terminal_wealth.eval(rho) / merton - 1.0).abs());
            }
            worst_budget = worst_budget.max((sol.achieved_budget / x - 1.0).abs());
        }
    }
    ensure(worst_map < 1e-6, || format!("map relative error {worst_map:e}"))?;
    ensure(worst_budget < 1e-8, || format!("budget relative error {worst_budget:e}"))?;
    Ok(format!("map rel err {worst_map:.1e}, budget rel err {worst_budget:.1e}"))
}

fn brute_envelope(z: &[f64], f: &[f64]) -> Vec<f64> {
    (0..z.len())
        .map(|i| {
            let mut best = f[i];
            for j in 0..i {
                for k in i + 1..z.len() {
                    best = best.max(f[j] + (f[k] - f[j]) * ((z[i] - z[j]) / (z[k] - z[j])));
                }
            }
            best
        })
        .collect()
}

fn envelope_correctness() -> Outcome {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let mut worst_concavity = f64::NEG_INFINITY;
    for g in 0..100 {
        let n = rng.random_range(3..200);
        let mut z: Vec<f64> = (0..n - 2).map(|_| rng.random::<f64>()).collect();
        z.extend([0.0, 1.0]);
        z.sort_by(f64::total_cmp);
        z.dedup();
        let f: Vec<f64> = z.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let grid = GridFunction::new(z.clone(), f.clone()).unwrap();
        let env = concave_envelope(&grid);
        ensure(env.values() == brute_envelope(&z, &f).as_slice(), || format!("grid {g}: hull differs from brute force"))?;
        ensure(env.values().iter().zip(&f).all(|(a, b)| a >= b), || format!("grid {g}: not a majorant"))?;
        worst_concavity = worst_concavity.max(env.concavity_defect());
        ensure(env.concavity_defect() <= 1e-12, || format!("grid {g}: concavity defect {:e}", env.concavity_defect()))?;
    }
    Ok(format!("100 random grids identical to brute force, max concavity defect {worst_concavity:.1e}"))
}

fn bifurcation() -> Outcome {
    let mut worst: f64 = 0.0;
    for gamma in [0.3, 0.8, 1.0, 1.7, 2.5] {
        for a in [0.04, 0.09, 0.5] {
            let law = KernelLaw::new(a).unwrap();
            let w = WangForward::new(gamma, law).unwrap().distortion();
            let c = check_degenerate(&w, &law, 999).map_err(|e| e.to_string())?;
            ensure(c.class == DegeneracyClass::Nondegenerate, || format!("Wang γ={gamma} A={a}: {:?}", c.class))?;
            let err = (c.fitted_gamma.unwrap() - gamma).abs();
            ensure(err < 1e-6, || format!("Wang γ={gamma} A={a}: fitted γ off by {err:e}"))?;
            worst = worst.max(err);
        }
    }
    let law = KernelLaw::new(0.09).unwrap();
    let boundary = Distortion::Wang { shift: -law.vol() };
    let c = check_degenerate(&boundary, &law, 999).map_err(|e| e.to_string())?;
    ensure(c.class == DegeneracyClass::Degenerate, || format!("boundary: {:?}", c.class))?;
    let prelec = Distortion::prelec(0.65, 1.0).unwrap();
    let c = check_degenerate(&prelec, &law, 999).map_err(|e| e.to_string())?;
    ensure(c.class == DegeneracyClass::Neither, || format!("Prelec: {:?}", c.class))?;
    Ok(format!("Wang fits within {worst:.1e}; boundary degenerate; Prelec neither"))
}

fn degenerate_branch() -> Outcome {
    let law = KernelLaw::new(0.09).unwrap();
    let w = Distortion::blend(Distortion::Wang { shift: -law.vol() }, Distortion::Identity, 0.05).unwrap();
    let u = Crra::new(2.0).unwrap();
    let sol = backward::solve_multiplier(&u, &w, law, 1.7).map_err(|e| e.to_string())?;
    ensure(sol.degenerate, || "blend not flagged degenerate".into())?;
    for i in 1..50 {
        let rho = law.quantile(i as f64 / 50.0).unwrap();
        ensure(sol.terminal_wealth.eval(rho) == 1.7, || format!("X* at ρ={rho} is not 1.7"))?;
    }
    let pair = ForwardPair::new(0.0, DiracMixture::crra(2.0).unwrap(), market(0.3)).unwrap();
    let grid = TimeGrid::uniform(20, 1.0, pair.market()).unwrap();
    let set = simulate::simulate_optimal(&pair, 1.7, &grid, 200, 1).map_err(|e| e.to_string())?;
    ensure(
        set.paths.iter().all(|p| p.wealth.iter().all(|x| *x == 1.7) && p.strategy.iter().all(|v| *v == 0.0)),
        || "γ = 0 paths not constant".into(),
    )?;
    let u0 = forward_u(&pair, 0.0, 1.3).unwrap();
    for t in [0.25, 0.5, 1.0] {
        ensure(forward_u(&pair, t, 1.3).unwrap() == u0, || format!("u_t changed at t={t}"))?;
    }
    Ok("X* ≡ x, π* ≡ 0 and u_t ≡ u_0".into())
}

fn euler_consistency() -> Outcome {
    let start = Instant::now();
    let pair = ForwardPair::new(2.0, DiracMixture::crra(2.0).unwrap(), market(0.3)).unwrap();
    let n_paths = 10_000;
    let seed = 31;
    let driver = 2f64.powi(-12);
    let closed_grid = TimeGrid::new(&[1.0], pair.market()).unwrap().with_driver_step(driver).unwrap();
    let closed = simulate::simulate_optimal(&pair, 1.0, &closed_grid, n_paths, seed).map_err(|e| e.to_string())?;
    let exact: Vec<f64> = closed.terminal_wealth().collect();
    let mut points = Vec::new();
    for k in 6..=12 {
        let grid = TimeGrid::uniform(1 << k, 1.0, pair.market()).unwrap().with_driver_step(driver).unwrap();
        let euler = simulate::euler_wealth(&OptimalFeedback(&pair), pair.market(), 1.0, &grid, n_paths, seed)
            .map_err(|e| e.to_string())?;
        let rms = (euler.terminal_wealth().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n_paths as f64).sqrt();
        points.push(((1.0 / (1u64 << k) as f64).ln(), rms.ln()));
    }
    let n = points.len() as f64;
    let (mx, my) = (points.iter().map(|p| p.0).sum::<f64>() / n, points.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    ensure((0.4..=0.6).contains(&slope), || format!("strong-error slope {slope:.3}"))?;

    let fine = TimeGrid::uniform(10_000, 1.0, pair.market()).unwrap();
    let closed = simulate::simulate_optimal(&pair, 1.0, &TimeGrid::new(&[1.0], pair.market()).unwrap().with_driver_step(1e-4).unwrap(), n_paths, seed)
        .map_err(|e| e.to_string())?;
    let euler = simulate::euler_wealth(&OptimalFeedback(&pair), pair.market(), 1.0, &fine, n_paths, seed).map_err(|e| e.to_string())?;
    let rms = (euler.terminal_wealth().zip(closed.terminal_wealth()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n_paths as f64).sqrt();
    ensure(rms < 1e-2, || format!("RMS gap at Δt = 1e-4: {rms:e}"))?;
    within(start.elapsed(), 60)?;
    Ok(format!("slope {slope:.3}, RMS gap {rms:.1e} at Δt = 1e-4, {:.1}s", start.elapsed().as_secs_f64()))
}

fn budget_identity() -> Outcome {
    let pair = ForwardPair::new(2.0, DiracMixture::two_dirac(0.5).unwrap(), market(0.3)).unwrap();
    let grid = TimeGrid::new(&[0.25, 0.5, 0.75, 1.0], pair.market()).unwrap();
    let summary = simulate::simulate_budget(&pair, 1.0, &grid, 1_000_000, 99).map_err(|e| e.to_string())?;
    let z = summary.worst_z_score(1.0);
    ensure(summary.flagged == 0, || format!("{} flagged paths", summary.flagged))?;
    ensure(z < 4.0, || format!("worst |mean − x|/SE = {z:.2}"))?;
    Ok(format!("10^6 paths, worst |mean − x|/SE = {z:.2}"))
}

fn dynamic_utility() -> Outcome {
    let m = market(0.3);
    let g0 = 1.6;
    let u0: Arc<dyn Utility> = Arc::new(Crra::new(2.0).unwrap());
    let times = [0.25, 0.5, 0.75];
    let constant = construct_dynamic(u0.clone(), g0, 1.0, &m, move |_| g0).unwrap();
    let mk = m.clone();
    let invariant = construct_dynamic(u0.clone(), g0, 1.0, &m, move |t| {
        if t == 0.0 {
            g0
        } else {
            DynamicProcess::invariant_distortion_gamma(g0, mk.accumulate_risk(0.0, 1.0).unwrap(), mk.accumulate_risk(t, 1.0).unwrap())
        }
    })
    .unwrap();
    let broken = construct_dynamic(u0, g0, 1.0, &m, move |t| if t == 0.0 { g0 } else { g0 + 0.5 })
        .unwrap()
        .freeze_distortion();
    let mut worst_pos: f64 = 0.0;
    let mut least_neg = f64::INFINITY;
    for &t in &times {
        for proc in [&constant, &invariant] {
            let g = verify::verify_dynamic_consistency(proc, t, 1.0).map_err(|e| e.to_string())?;
            ensure(g < 1e-6, || format!("positive control gap {g:e} at t={t}"))?;
            worst_pos = worst_pos.max(g);
        }
        let g = verify::verify_dynamic_consistency(&broken, t, 1.0).map_err(|e| e.to_string())?;
        ensure(g > 1e-3, || format!("negative control gap {g:e} at t={t}"))?;
        least_neg = least_neg.min(g);
    }
    Ok(format!("positive gaps ≤ {worst_pos:.1e}, negative gaps ≥ {least_neg:.2e}"))
}

fn pessimism_calculus() -> Outcome {
    let law = KernelLaw::new(0.25).unwrap();
    let prospects = [
        ("lognormal", Prospect::lognormal(0.0, 0.5).unwrap()),
        ("uniform", Prospect::uniform()),
        ("kernel", Prospect::kernel_map(KernelLaw::new(0.16).unwrap(), |rho| 1.0 / rho)),
    ];
    for (name, x) in &prospects {
        let mut prev = f64::INFINITY;
        for gamma in [0.25, 0.5, 1.0, 1.5, 2.0] {
            let w = WangForward::new(gamma, law).unwrap().distortion();
            let d = distortion::pessimism_premium(&w, x).map_err(|e| e.to_string())?;
            let sign_ok = if gamma < 1.0 {
                d > 1e-9
            } else if gamma == 1.0 {
                d.abs() < 1e-12
            } else {
                d < -1e-9
            };
            ensure(sign_ok, || format!("{name} γ={gamma}: Δ = {d:e} has the wrong sign"))?;
            ensure(d < prev, || format!("{name}: Δ not decreasing at γ={gamma}"))?;
            prev = d;
        }
    }
    Ok("3 prospects × 5 γ values: signs and ordering hold".into())
}

fn determinism() -> Outcome {
    let pair = ForwardPair::new(1.3, DiracMixture::two_dirac(0.4).unwrap(), market(0.3)).unwrap();
    let grid = TimeGrid::uniform(32, 1.0, pair.market()).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let closed = simulate::simulate_optimal(&pair, 1.0, &grid, 2_000, 5).unwrap();
            let euler = simulate::euler_wealth(&OptimalFeedback(&pair), pair.market(), 1.0, &grid, 500, 5).unwrap();
            let budget = simulate::simulate_budget(&pair, 1.0, &grid, 20_000, 5).unwrap();
            (closed, euler, budget)
        })
    };
    let base = run(1);
    for threads in [4, 16] {
        let other = run(threads);
        ensure(base.0.bit_identical(&other.0), || format!("closed form differs with {threads} workers"))?;
        ensure(base.1.bit_identical(&other.1), || format!("Euler differs with {threads} workers"))?;
        let bits = |s: &simulate::BudgetSummary| s.points.iter().map(|p| (p.mean.to_bits(), p.standard_error.to_bits())).collect::<Vec<_>>();
        ensure(bits(&base.2) == bits(&other.2), || format!("budget summary differs with {threads} workers"))?;
    }
    Ok("bit-identical across 1, 4 and 16 workers".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("wang cross-representation", wang_cross_representation),
        ("value preservation", value_preservation),
        ("suboptimality margins", suboptimality_margins),
        ("merton recovery", merton_recovery),
        ("envelope correctness", envelope_correctness),
        ("bifurcation classification", bifurcation),
        ("degenerate branch", degenerate_branch),
        ("simulation consistency", euler_consistency),
        ("martingale budget identity", budget_identity),
        ("dynamic utility", dynamic_utility),
        ("pessimism calculus", pessimism_calculus),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
