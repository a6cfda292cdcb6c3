//! Classical rank-dependent portfolio problem on a fixed horizon: the N
//! function, its concave envelope, the optimal terminal wealth map and the
//! multiplier matching the budget.
//!
//! Grids are parameterised by the score x of the kernel quantile level,
//! p = Φ(x). A node then sits at z = 1 − w(Φ(x)) with N(z) = −Φ(x − √A), and
//! on any stretch where N is its own envelope the slope is available in
//! closed form: N'(z) = F⁻¹(p)/w'(p) = exp(√A·x − A/2 − ln w'(Φ(x))).

use crate::distortion::{self, DegeneracyClass, Distortion};
use crate::error::{Error, Result};
use crate::market::KernelLaw;
use crate::normal;
use crate::quadrature::{self, Tolerance};
use crate::utility::Utility;

pub const MIN_NODES: usize = 64;
pub const DEFAULT_NODES: usize = 2001;
/// Relative budget mismatch accepted after the multiplier search.
pub const BUDGET_TOLERANCE: f64 = 1e-8;
const CONTACT_SLACK: f64 = 1e-12;
const MAX_DOUBLINGS: usize = 60;
const CLASSIFY_GRID: usize = 999;
const BUDGET_QUADRATURE: Tolerance = Tolerance::new(0.0, 1e-13);
// Node scores are spread over the range where w(Φ(x)) is resolvable.
const NODE_LEVEL: f64 = 1e-15;
const NODE_SCORE_LIMIT: f64 = 38.0;

/// Function sampled on a strictly increasing grid of [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if nodes.len() != values.len() || nodes.len() < 3 {
            return Err(Error::domain(format!(
                "grid function needs >= 3 nodes and as many values, got {} and {}",
                nodes.len(),
                values.len()
            )));
        }
        if nodes.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::domain("grid function entries must be finite"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("grid nodes must be strictly increasing"));
        }
        Ok(Self { nodes, values })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Piecewise-linear interpolation, clamped outside the grid.
    pub fn eval(&self, z: f64) -> f64 {
        let n = self.nodes.len();
        if z <= self.nodes[0] {
            return self.values[0];
        }
        if z >= self.nodes[n - 1] {
            return self.values[n - 1];
        }
        let k = self.nodes.partition_point(|&t| t <= z);
        chord(z, self.nodes[k - 1], self.values[k - 1], self.nodes[k], self.values[k])
    }

    /// Largest amount by which a node falls below the chord through its
    /// neighbours; ⩽ 0 for a concave function.
    pub fn concavity_defect(&self) -> f64 {
        let (z, f) = (&self.nodes, &self.values);
        (1..z.len() - 1)
            .map(|i| chord(z[i], z[i - 1], f[i - 1], z[i + 1], f[i + 1]) - f[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn chord(z: f64, z0: f64, f0: f64, z1: f64, f1: f64) -> f64 {
    f0 + (f1 - f0) * ((z - z0) / (z1 - z0))
}

// N on its grid together with the score of each node; the first node
// (z = 0) has score +∞ and the last (z = 1) has −∞.
struct NGrid {
    grid: GridFunction,
    scores: Vec<f64>,
}

fn n_grid(w: &Distortion, law: &KernelLaw, nodes: usize) -> Result<NGrid> {
    if nodes < MIN_NODES {
        return Err(Error::domain(format!("N grid needs >= {MIN_NODES} nodes, got {nodes}")));
    }
    let hi = w.inverse_score(1.0 - NODE_LEVEL).clamp(-NODE_SCORE_LIMIT, NODE_SCORE_LIMIT);
    let lo = w.inverse_score(NODE_LEVEL).clamp(-NODE_SCORE_LIMIT, NODE_SCORE_LIMIT);
    if !(hi > lo) {
        return Err(Error::numeric(format!("distortion inverse gave an empty score range [{lo}, {hi}]"), f64::NAN));
    }
    let interior = nodes - 2;
    let mut z = Vec::with_capacity(nodes);
    let mut f = Vec::with_capacity(nodes);
    let mut scores = Vec::with_capacity(nodes);
    z.push(0.0);
    f.push(-1.0);
    scores.push(f64::INFINITY);
    for i in 0..interior {
        let x = hi - (hi - lo) * i as f64 / (interior - 1) as f64;
        let zi = 1.0 - w.eval_at_score(x);
        let fi = -normal::cdf(x - law.vol());
        if !zi.is_finite() || !fi.is_finite() {
            return Err(Error::numeric(format!("N is not finite at score {x}"), f64::NAN));
        }
        if zi > *z.last().unwrap() && zi < 1.0 {
            z.push(zi);
            f.push(fi);
            scores.push(x);
        }
    }
    z.push(1.0);
    f.push(0.0);
    scores.push(f64::NEG_INFINITY);
    Ok(NGrid {
        grid: GridFunction::new(z, f)?,
        scores,
    })
}

/// N(z) = −∫₀^{w⁻¹(1−z)} F⁻¹(t) dt sampled on about `nodes` points.
/// Nodes whose z coincides in double precision with a neighbour are merged.
pub fn build_n(w: &Distortion, law: &KernelLaw, nodes: usize) -> Result<GridFunction> {
    Ok(n_grid(w, law, nodes)?.grid)
}

/// N at a single level z ∈ [0, 1].
pub fn n_value(w: &Distortion, law: &KernelLaw, z: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::domain(format!("N is defined on [0, 1], got {z}")));
    }
    Ok(-law.partial_expectation(w.inverse(1.0 - z))?)
}

/// Indices of the upper hull vertices, by monotone chain. Points on a hull
/// edge are not vertices.
fn upper_hull(z: &[f64], f: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        while let [.., a, b] = hull[..] {
            let cross = (z[b] - z[a]) * (f[i] - f[a]) - (f[b] - f[a]) * (z[i] - z[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Least concave majorant on the same nodes.
pub fn concave_envelope(f: &GridFunction) -> GridFunction {
    let hull = upper_hull(&f.nodes, &f.values);
    let mut values = f.values.clone();
    for seg in hull.windows(2) {
        let (j, k) = (seg[0], seg[1]);
        for i in j + 1..k {
            values[i] = chord(f.nodes[i], f.nodes[j], f.values[j], f.nodes[k], f.values[k]);
        }
    }
    GridFunction {
        nodes: f.nodes.clone(),
        values,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Wealth is fixed; no risky exposure.
    Constant,
    /// N is concave and the slope is read off directly.
    JinZhou,
    /// Slope of the concave envelope of N.
    Envelope,
}

#[derive(Debug, Clone)]
struct EnvelopeSlopes {
    // Hull vertex scores, decreasing (z increasing).
    scores: Vec<f64>,
    // Per hull segment: None on contact, Some(chord slope) on a bridge.
    bridges: Vec<Option<f64>>,
}

impl EnvelopeSlopes {
    fn new(n: &NGrid) -> Self {
        let (z, f) = (n.grid.nodes(), n.grid.values());
        let hull = upper_hull(z, f);
        let bridges = hull
            .windows(2)
            .map(|seg| {
                let (j, k) = (seg[0], seg[1]);
                let touches = (j + 1..k).all(|i| (chord(z[i], z[j], f[j], z[k], f[k]) - f[i]).abs() <= CONTACT_SLACK);
                (!touches).then(|| (f[k] - f[j]) / (z[k] - z[j]))
            })
            .collect();
        Self {
            scores: hull.iter().map(|&i| n.scores[i]).collect(),
            bridges,
        }
    }

    // Left-slope convention in z: a vertex belongs to the segment ending there.
    fn bridge_at(&self, x: f64) -> Option<f64> {
        let k = self.scores.partition_point(|&s| s > x);
        self.bridges[k.clamp(1, self.bridges.len()) - 1]
    }

    // Finite hull vertex scores that bound a bridge.
    fn kinks(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, b) in self.bridges.iter().enumerate() {
            if b.is_some() {
                out.extend([self.scores[i], self.scores[i + 1]].into_iter().filter(|s| s.is_finite()));
            }
        }
        out
    }
}

/// The map ρ ↦ X*(ρ) for a fixed multiplier.
#[derive(Clone)]
pub struct TerminalWealthMap<'a> {
    u: &'a dyn Utility,
    w: &'a Distortion,
    law: KernelLaw,
    multiplier: f64,
    constant: Option<f64>,
    envelope: Option<EnvelopeSlopes>,
}

impl std::fmt::Debug for TerminalWealthMap<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TerminalWealthMap")
            .field("branch", &self.branch())
            .field("multiplier", &self.multiplier)
            .field("law", &self.law)
            .finish()
    }
}

impl<'a> TerminalWealthMap<'a> {
    /// X*(ρ) = (u')⁻¹(λρ/w'(F(ρ))).
    pub fn jin_zhou(u: &'a dyn Utility, w: &'a Distortion, law: KernelLaw, multiplier: f64) -> Result<Self> {
        check_multiplier(multiplier)?;
        Ok(Self {
            u,
            w,
            law,
            multiplier,
            constant: law.is_degenerate().then(|| u.marginal_inverse(multiplier)),
            envelope: None,
        })
    }

    /// X*(ρ) = (u')⁻¹(λ N̂'(1 − w(F(ρ)))) with the envelope built on `nodes`.
    pub fn envelope(
        u: &'a dyn Utility,
        w: &'a Distortion,
        law: KernelLaw,
        multiplier: f64,
        nodes: usize,
    ) -> Result<Self> {
        let mut map = Self::jin_zhou(u, w, law, multiplier)?;
        if map.constant.is_none() {
            map.envelope = Some(EnvelopeSlopes::new(&n_grid(w, &law, nodes)?));
        }
        Ok(map)
    }

    fn fixed(u: &'a dyn Utility, w: &'a Distortion, law: KernelLaw, multiplier: f64, wealth: f64) -> Self {
        Self {
            u,
            w,
            law,
            multiplier,
            constant: Some(wealth),
            envelope: None,
        }
    }

    pub fn branch(&self) -> Branch {
        match (&self.constant, &self.envelope) {
            (Some(_), _) => Branch::Constant,
            (None, None) => Branch::JinZhou,
            (None, Some(_)) => Branch::Envelope,
        }
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn law(&self) -> KernelLaw {
        self.law
    }

    fn with_multiplier(&self, multiplier: f64) -> Self {
        let mut out = self.clone();
        out.multiplier = multiplier;
        if self.constant.is_some() {
            out.constant = Some(self.u.marginal_inverse(multiplier));
        }
        out
    }

    /// X* at kernel value ρ > 0.
    pub fn eval(&self, rho: f64) -> f64 {
        match self.constant {
            Some(c) => c,
            None => self.at_level_score((rho.ln() + 0.5 * self.law.a()) / self.law.vol()),
        }
    }

    /// X* as a function of the score x with F(ρ) = Φ(x).
    pub fn at_level_score(&self, x: f64) -> f64 {
        if let Some(c) = self.constant {
            return c;
        }
        let bridge = self.envelope.as_ref().and_then(|e| e.bridge_at(x));
        let slope = match bridge {
            Some(s) => s,
            None => (self.law.vol() * x - 0.5 * self.law.a() - self.w.ln_derivative_at_score(x)).exp(),
        };
        self.u.marginal_inverse(self.multiplier * slope)
    }

    /// E[ρ·X*(ρ)].
    pub fn budget(&self) -> Result<f64> {
        if let Some(c) = self.constant {
            return Ok(c);
        }
        let (vol, a) = (self.law.vol(), self.law.a());
        let integrand = |x: f64| {
            let weight = (vol * x - 0.5 * a).exp() * normal::pdf(x);
            if weight == 0.0 {
                0.0
            } else {
                weight * self.at_level_score(x)
            }
        };
        let mut centres = vec![0.0, vol, self.w.score_centre()];
        if let Some(e) = &self.envelope {
            centres.extend(e.kinks());
        }
        let (lo, hi) = self.w.score_support();
        let lo = lo.min(-quadrature::LINE_HALF_WIDTH);
        let hi = hi.max(vol + quadrature::LINE_HALF_WIDTH);
        quadrature::gauss_kronrod_span(integrand, &centres, lo, hi, BUDGET_QUADRATURE)
    }
}

fn check_multiplier(multiplier: f64) -> Result<()> {
    if !(multiplier > 0.0) || !multiplier.is_finite() {
        return Err(Error::domain(format!("multiplier must be positive and finite, got {multiplier}")));
    }
    Ok(())
}

/// Chooses the direct branch when the monotonicity condition holds and the
/// envelope branch otherwise.
pub fn optimal_terminal_wealth<'a>(
    u: &'a dyn Utility,
    w: &'a Distortion,
    law: KernelLaw,
    multiplier: f64,
) -> Result<TerminalWealthMap<'a>> {
    if law.is_degenerate() || distortion::jin_zhou_monotone(w, &law, CLASSIFY_GRID)? {
        TerminalWealthMap::jin_zhou(u, w, law, multiplier)
    } else {
        TerminalWealthMap::envelope(u, w, law, multiplier, DEFAULT_NODES)
    }
}

#[derive(Debug, Clone)]
pub struct BackwardSolution<'a> {
    pub multiplier: f64,
    pub achieved_budget: f64,
    pub degenerate: bool,
    pub terminal_wealth: TerminalWealthMap<'a>,
}

/// Finds λ* with E[ρ X*(ρ; λ*)] = x. Degenerate inputs give X* ≡ x and
/// λ* = u'(x).
pub fn solve_multiplier<'a>(
    u: &'a dyn Utility,
    w: &'a Distortion,
    law: KernelLaw,
    initial_wealth: f64,
) -> Result<BackwardSolution<'a>> {
    let x = initial_wealth;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("initial wealth must be positive, got {x}")));
    }
    let seed = u.marginal(x);
    let degenerate =
        law.is_degenerate() || distortion::check_degenerate(w, &law, CLASSIFY_GRID)?.class == DegeneracyClass::Degenerate;
    if degenerate {
        return Ok(BackwardSolution {
            multiplier: seed,
            achieved_budget: x,
            degenerate: true,
            terminal_wealth: TerminalWealthMap::fixed(u, w, law, seed, x),
        });
    }
    let base = optimal_terminal_wealth(u, w, law, seed)?;
    // g(ℓ) = ln E[ρX*(ρ; e^ℓ)] − ln x is decreasing in ℓ and close to linear.
    let g = |l: f64| -> Result<f64> { Ok(base.with_multiplier(l.exp()).budget()?.ln() - x.ln()) };

    let l0 = seed.ln();
    let g0 = g(l0)?;
    let (mut a, mut ga, mut b, mut gb) = (l0, g0, l0, g0);
    let step = std::f64::consts::LN_2;
    let mut doublings = 0;
    while ga.signum() == gb.signum() && ga != 0.0 {
        if doublings == MAX_DOUBLINGS {
            return Err(Error::NoSolution(format!(
                "budget does not bracket {x} within 2^±{MAX_DOUBLINGS} of u'(x) = {seed}"
            )));
        }
        doublings += 1;
        if g0 > 0.0 {
            (a, ga) = (b, gb);
            b += step;
            gb = g(b)?;
        } else {
            (b, gb) = (a, ga);
            a -= step;
            ga = g(a)?;
        }
    }

    // Illinois false position with a bisection fallback.
    let mut l = if ga == 0.0 { a } else { b };
    let mut gl = if ga == 0.0 { ga } else { gb };
    let mut side = 0i8;
    for _ in 0..200 {
        if gl.abs() <= 1e-14 || (b - a).abs() <= 1e-14 * a.abs().max(1.0) {
            break;
        }
        let mut next = (a * gb - b * ga) / (gb - ga);
        if !(next > a.min(b) && next < a.max(b)) {
            next = 0.5 * (a + b);
        }
        let gn = g(next)?;
        if gn.signum() == ga.signum() {
            (a, ga) = (next, gn);
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            (b, gb) = (next, gn);
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
        (l, gl) = (next, gn);
    }

    let map = base.with_multiplier(l.exp());
    let achieved = map.budget()?;
    let mismatch = (achieved - x).abs() / x;
    if mismatch > BUDGET_TOLERANCE {
        return Err(Error::numeric(
            format!("budget matched only to relative {mismatch:e}"),
            mismatch,
        ));
    }
    Ok(BackwardSolution {
        multiplier: l.exp(),
        achieved_budget: achieved,
        degenerate: false,
        terminal_wealth: map,
    })
}
