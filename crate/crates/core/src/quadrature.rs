//! Quadrature rules: adaptive Simpson, adaptive Gauss–Kronrod (7/15),
//! fixed Gauss–Legendre and Gauss–Hermite rules.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Absolute/relative tolerance pair; the target is `max(abs, rel·|I|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-13, 1e-12)
    }
}

const MAX_DEPTH: usize = 60;

/// Adaptive Simpson with Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut worst = 0.0;
    let value = simpson_rec(&f, a, b, fa, fm, fb, whole, abs_tol, MAX_DEPTH, &mut worst);
    if !value.is_finite() {
        return Err(Error::numeric("adaptive Simpson produced a non-finite value", f64::INFINITY));
    }
    if worst > abs_tol {
        return Err(Error::numeric("adaptive Simpson hit the depth limit", worst));
    }
    Ok(value)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    worst: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || depth == 0 || (m - a).abs() < 1e-15 * a.abs().max(1.0) {
        if depth == 0 {
            *worst = worst.max(delta.abs() / 15.0);
        }
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, worst)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, worst)
}

// Kronrod 15-point nodes (positive half, descending) and weights, with the
// embedded 7-point Gauss weights for the odd-indexed nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

// Returns the Kronrod estimate and its error, scaled as in QUADPACK and
// floored at the rounding level of ∫|f|.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    let mut values = [(0.0, 0.0); 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let (l, r) = (f(c - dx), f(c + dx));
        values[j] = (l, r);
        kronrod += WGK[j] * (l + r);
        abs += WGK[j] * (l.abs() + r.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (l + r);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((values[j].0 - mean).abs() + (values[j].1 - mean).abs());
    }
    let h = h.abs();
    let (asc, abs) = (asc * h, abs * h);
    let mut err = ((kronrod - gauss) * h).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    if abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * abs);
    }
    (kronrod * h * (b - a).signum(), err)
}

const MAX_SUBDIVISIONS: usize = 5000;

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss–Kronrod 7/15 quadrature on a finite interval:
/// the piece with the largest error estimate is bisected until the summed
/// error meets the tolerance.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (value, err) = gk15(&f, a, b);
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(Piece { a, b, value, err });
    // Pieces too narrow to split keep their error here.
    let (mut frozen_value, mut frozen_err) = (0.0, 0.0);
    let (mut running, mut running_err) = (value, err);
    let exact = |heap: &std::collections::BinaryHeap<Piece>, fv: f64, fe: f64| {
        (
            fv + heap.iter().map(|p| p.value).sum::<f64>(),
            fe + heap.iter().map(|p| p.err).sum::<f64>(),
        )
    };
    for _ in 0..MAX_SUBDIVISIONS {
        if !running.is_finite() || running_err.is_nan() {
            return Err(Error::numeric("Gauss-Kronrod produced a non-finite value", f64::INFINITY));
        }
        if running_err <= tol.abs.max(tol.rel * running.abs()) {
            (running, running_err) = exact(&heap, frozen_value, frozen_err);
            if running_err <= tol.abs.max(tol.rel * running.abs()) {
                return Ok(running);
            }
        }
        let Some(worst) = heap.pop() else {
            return Err(Error::numeric("Gauss-Kronrod cannot refine further", running_err));
        };
        let m = 0.5 * (worst.a + worst.b);
        if (worst.b - worst.a).abs() < 1e-13 * worst.a.abs().max(worst.b.abs()).max(1e-300) || m == worst.a || m == worst.b {
            frozen_value += worst.value;
            frozen_err += worst.err;
            continue;
        }
        let (l, el) = gk15(&f, worst.a, m);
        let (r, er) = gk15(&f, m, worst.b);
        running += l + r - worst.value;
        running_err += el + er - worst.err;
        heap.push(Piece { a: worst.a, b: m, value: l, err: el });
        heap.push(Piece { a: m, b: worst.b, value: r, err: er });
    }
    let (total, total_err) = exact(&heap, frozen_value, frozen_err);
    if total_err <= tol.abs.max(tol.rel * total.abs()) && total.is_finite() {
        return Ok(total);
    }
    Err(Error::numeric("Gauss-Kronrod hit the subdivision limit", total_err))
}

/// Integrate over consecutive breakpoints, summing the pieces.
pub fn gauss_kronrod_pieces<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: Tolerance) -> Result<f64> {
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += gauss_kronrod(&f, w[0], w[1], tol)?;
    }
    Ok(total)
}

/// Half-width of the truncated real line used by [`gauss_kronrod_line`].
/// Gaussian weights beyond this distance from every centre are below
/// e^{-800} and vanish in double precision.
pub const LINE_HALF_WIDTH: f64 = 40.0;

/// Integrates a function with Gaussian-type decay over the real line.
/// `centres` are locations where the integrand's mass concentrates; the
/// domain is cut at `LINE_HALF_WIDTH` beyond the outermost centre and
/// broken into pieces graded around each centre.
pub fn gauss_kronrod_line<F: Fn(f64) -> f64>(f: F, centres: &[f64], tol: Tolerance) -> Result<f64> {
    let lo = centres.iter().copied().fold(0.0, f64::min) - LINE_HALF_WIDTH;
    let hi = centres.iter().copied().fold(0.0, f64::max) + LINE_HALF_WIDTH;
    gauss_kronrod_span(f, centres, lo, hi, tol)
}

/// As [`gauss_kronrod_line`] on the explicit window `[lo, hi]`, for
/// integrands whose tails reach beyond the default cut.
pub fn gauss_kronrod_span<F: Fn(f64) -> f64>(f: F, centres: &[f64], lo: f64, hi: f64, tol: Tolerance) -> Result<f64> {
    const OFFSETS: [f64; 7] = [-12.0, -6.0, -3.0, 0.0, 3.0, 6.0, 12.0];
    let mut breaks: Vec<f64> = centres
        .iter()
        .flat_map(|c| OFFSETS.iter().map(move |o| c + o))
        .filter(|b| *b > lo && *b < hi)
        .collect();
    breaks.push(lo);
    breaks.push(hi);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    gauss_kronrod_pieces(f, &breaks, tol)
}

/// Fixed-order quadrature rule: nodes and weights.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// n-point Gauss–Legendre rule on [-1, 1].
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = 1.0;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
                }
                pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// n-point Gauss–Hermite rule for the standard normal weight: ∑ wᵢ f(zᵢ)
    /// approximates E[f(Z)], Z ~ N(0, 1).
    pub fn gauss_hermite_normal(n: usize) -> Self {
        assert!(n >= 1);
        // Golub–Welsch eigenvalues of the probabilists' Jacobi matrix seed a
        // Newton polish on the orthonormal recurrence; weights come from the
        // polished derivative, which is accurate even for tiny tail weights.
        let mut jacobi = nalgebra::DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64).sqrt();
            jacobi[(k, k - 1)] = b;
            jacobi[(k - 1, k)] = b;
        }
        let mut seeds: Vec<f64> = nalgebra::SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        seeds.sort_by(|a, b| a.total_cmp(b));

        let nf = n as f64;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for &seed in &seeds {
            let mut z = seed;
            for _ in 0..20 {
                // Orthonormal He_k: p_{k+1} = (z p_k − √k p_{k−1}) / √(k+1);
                // p_n' = √n p_{n−1}.
                let (pn, pn1) = orthonormal_hermite(n, z);
                let step = pn / (nf.sqrt() * pn1);
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, pn1) = orthonormal_hermite(n, z);
            // Christoffel weight for the normalised measure: 1 / (n p_{n−1}²)
            // with the p_k normalised against N(0, 1).
            nodes.push(z);
            weights.push(1.0 / (nf * pn1 * pn1));
        }
        Self { nodes, weights }
    }

    /// Apply the [-1, 1] rule to [a, b].
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(c + h * x))
            .sum::<f64>()
            * h
    }

    /// ∑ wᵢ f(zᵢ) without rescaling.
    pub fn sum<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Returns (p_n(z), p_{n−1}(z)) for Hermite polynomials orthonormal under
/// the standard normal weight, computed in scaled form to avoid overflow.
fn orthonormal_hermite(n: usize, z: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut log_scale = 0.0f64;
    for k in 0..n {
        let kf = k as f64;
        let next = (z * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
        prev = cur;
        cur = next;
        let m = cur.abs().max(prev.abs());
        if m > 1e100 {
            cur /= m;
            prev /= m;
            log_scale += m.ln();
        }
    }
    let s = log_scale.exp();
    (cur * s, prev * s)
}
