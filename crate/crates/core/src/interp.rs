//! Shape-preserving piecewise cubic Hermite interpolation (PCHIP).
//!
//! Interior slopes are the weighted harmonic mean of neighbouring secants,
//! zero at local extrema; end slopes use the three-point formula clipped to
//! keep monotonicity. Monotone data give a monotone interpolant with a
//! continuous first derivative.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl MonotoneCubic {
    /// `x` strictly increasing, `y` nondecreasing, at least two points.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::Spec(format!(
                "interpolation needs matching abscissae and values (>= 2), got {} and {}",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Spec("interpolation nodes must be finite".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Spec("interpolation abscissae must be strictly increasing".into()));
        }
        if y.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Spec("interpolation values must be nondecreasing".into()));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut slope = vec![0.0; n];
        if n == 2 {
            slope[0] = d[0];
            slope[1] = d[0];
        } else {
            for i in 1..n - 1 {
                if d[i - 1] > 0.0 && d[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    slope[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
                }
            }
            slope[0] = end_slope(h[0], h[1], d[0], d[1]);
            slope[n - 1] = end_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
        }
        Ok(Self { x, y, slope })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    fn locate(&self, t: f64) -> usize {
        let n = self.x.len();
        self.x.partition_point(|v| *v <= t).clamp(1, n - 1) - 1
    }

    /// Interpolated value; clamps to the end values outside the node range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h * h10 * self.slope[i] + h01 * self.y[i + 1] + h * h11 * self.slope[i + 1]
    }

    /// Derivative of the interpolant; zero outside the node range.
    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t < self.x[0] || t > self.x[n - 1] {
            return 0.0;
        }
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        d00 * self.y[i] + d10 * self.slope[i] + d01 * self.y[i + 1] + d11 * self.slope[i + 1]
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_nodes_and_cubics_exactly_enough() {
        let x: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v * v + v).collect();
        let c = MonotoneCubic::new(x.clone(), y.clone()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(c.eval(*a), *b);
        }
        for k in 0..200 {
            let t = k as f64 / 200.0;
            assert!((c.eval(t) - (t * t * t + t)).abs() < 2e-4);
            assert!((c.derivative(t) - (3.0 * t * t + 1.0)).abs() < 2e-2);
        }
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(MonotoneCubic::new(vec![0.0], vec![0.0]).is_err());
        assert!(MonotoneCubic::new(vec![0.0, 0.0], vec![0.0, 1.0]).is_err());
        assert!(MonotoneCubic::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(MonotoneCubic::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn flat_runs_stay_flat() {
        let c = MonotoneCubic::new(vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 1.0, 2.0]).unwrap();
        for k in 0..=100 {
            let t = 1.0 + k as f64 / 100.0;
            assert!((c.eval(t) - 1.0).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn interpolant_is_monotone(steps in proptest::collection::vec((0.01f64..1.0, 0.0f64..1.0), 3..30)) {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (dx, dy) in &steps {
                x.push(x.last().unwrap() + dx);
                y.push(y.last().unwrap() + dy * dy * dy);
            }
            let c = MonotoneCubic::new(x.clone(), y).unwrap();
            let end = *x.last().unwrap();
            let mut prev = c.eval(0.0);
            for k in 1..=500 {
                let v = c.eval(end * k as f64 / 500.0);
                prop_assert!(v >= prev - 1e-12);
                prev = v;
                prop_assert!(c.derivative(end * k as f64 / 500.0) >= -1e-9);
            }
        }
    }
}
