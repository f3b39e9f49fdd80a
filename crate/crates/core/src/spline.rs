//! Natural cubic spline interpolation.
//!
//! The spline passes through every knot, is C² on the interior and has zero
//! second derivative at both ends. Queries are only accepted inside the knot
//! range (a relative slack of 1e-9 of the span absorbs rounding at the ends).

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

const EDGE_SLACK: f64 = 1e-9;

impl CubicSpline {
    /// Fits a natural cubic spline through `(x[i], y[i])`.
    ///
    /// Two knots give the straight line through them; three or more give the
    /// usual tridiagonal system.
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidKnots(format!(
                "{} abscissae but {} ordinates",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::InvalidKnots(format!(
                "need at least 2 knots, got {}",
                x.len()
            )));
        }
        if let Some(i) = x.iter().chain(y).position(|v| !v.is_finite()) {
            return Err(Error::InvalidKnots(format!("non-finite value at position {i}")));
        }
        if let Some(i) = x.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidKnots(format!(
                "abscissae not strictly increasing at knot {} ({} then {})",
                i + 1,
                x[i],
                x[i + 1]
            )));
        }

        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior unknowns m[1..n-1].
            let interior = n - 2;
            let mut diag = vec![0.0; interior];
            let mut upper = vec![0.0; interior];
            let mut rhs = vec![0.0; interior];
            for k in 0..interior {
                let i = k + 1;
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[k] = 2.0 * (h0 + h1);
                upper[k] = h1;
                rhs[k] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for k in 1..interior {
                let lower = x[k + 1] - x[k];
                let w = lower / diag[k - 1];
                diag[k] -= w * upper[k - 1];
                rhs[k] -= w * rhs[k - 1];
            }
            m[interior] = rhs[interior - 1] / diag[interior - 1];
            for k in (0..interior - 1).rev() {
                m[k + 1] = (rhs[k] - upper[k] * m[k + 2]) / diag[k];
            }
        }

        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// True when `t` can be evaluated.
    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.domain();
        let slack = EDGE_SLACK * (hi - lo);
        t >= lo - slack && t <= hi + slack
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !self.contains(t) || t.is_nan() {
            return Err(Error::OutOfDomain {
                value: t,
                min: lo,
                max: hi,
            });
        }
        Ok(self.eval_clamped(t.clamp(lo, hi)))
    }

    /// Evaluates at a point already known to lie in the domain.
    pub(crate) fn eval_clamped(&self, t: f64) -> f64 {
        let n = self.x.len();
        let seg = self.x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
        self.eval_segment(seg, t)
    }

    fn eval_segment(&self, i: usize, t: f64) -> f64 {
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    /// First derivative at `t`.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !self.contains(t) || t.is_nan() {
            return Err(Error::OutOfDomain {
                value: t,
                min: lo,
                max: hi,
            });
        }
        let t = t.clamp(lo, hi);
        let n = self.x.len();
        let i = self.x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        Ok((self.y[i + 1] - self.y[i]) / h
            + h / 6.0 * (-(3.0 * a * a - 1.0) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]))
    }

    /// Second derivative at `t`, piecewise linear between knots.
    pub fn second_derivative(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !self.contains(t) || t.is_nan() {
            return Err(Error::OutOfDomain {
                value: t,
                min: lo,
                max: hi,
            });
        }
        let t = t.clamp(lo, hi);
        let n = self.x.len();
        let i = self.x.partition_point(|&v| v <= t).clamp(1, n - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        Ok(((self.x[i + 1] - t) * self.m[i] + (t - self.x[i]) * self.m[i + 1]) / h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn reproduces_knot_values() {
        let x = linspace(0.0, 3.0, 10);
        let y: Vec<f64> = x.iter().map(|v| v * v * v).collect();
        let s = CubicSpline::new(&x, &y).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((s.eval(*xi).unwrap() - yi).abs() < 1e-12);
        }
    }

    #[test]
    fn reproduces_linear_functions_everywhere() {
        let x = linspace(-1.0, 4.0, 11);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let s = CubicSpline::new(&x, &y).unwrap();
        for w in x.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            assert!((s.eval(mid).unwrap() - (2.0 * mid + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn sine_midpoint_error() {
        let x = linspace(0.0, std::f64::consts::PI, 50);
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let s = CubicSpline::new(&x, &y).unwrap();
        let worst = x
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .map(|t| (s.eval(t).unwrap() - t.sin()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "worst midpoint error {worst}");
    }

    #[test]
    fn natural_boundary_and_c2_continuity() {
        let x = vec![0.0, 0.7, 1.1, 2.0, 3.5];
        let y = vec![1.0, -0.5, 2.0, 0.3, 0.9];
        let s = CubicSpline::new(&x, &y).unwrap();
        assert!(s.second_derivative(0.0).unwrap().abs() < 1e-12);
        assert!(s.second_derivative(3.5).unwrap().abs() < 1e-12);
        for &k in &x[1..4] {
            let eps = 1e-7;
            let l = s.derivative(k - eps).unwrap();
            let r = s.derivative(k + eps).unwrap();
            assert!((l - r).abs() < 1e-5);
        }
    }

    #[test]
    fn two_knots_is_linear() {
        let s = CubicSpline::new(&[1.0, 3.0], &[2.0, 6.0]).unwrap();
        assert!((s.eval(2.5).unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(matches!(
            CubicSpline::new(&[0.0, 1.0, 1.0, 2.0], &[0.0; 4]),
            Err(Error::InvalidKnots(_))
        ));
        assert!(matches!(
            CubicSpline::new(&[0.0, 2.0, 1.0, 3.0], &[0.0; 4]),
            Err(Error::InvalidKnots(_))
        ));
        assert!(matches!(
            CubicSpline::new(&[0.0], &[0.0]),
            Err(Error::InvalidKnots(_))
        ));
    }

    #[test]
    fn out_of_domain_is_error() {
        let s = CubicSpline::new(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(s.eval(3.1), Err(Error::OutOfDomain { .. })));
        assert!(matches!(s.eval(-0.1), Err(Error::OutOfDomain { .. })));
        assert!(s.eval(3.0).is_ok());
    }

    proptest! {
        // Away from the ends the natural boundary condition does not matter
        // much, but it does perturb a cubic; knots are dense so the interior
        // third sees that perturbation damped far below 1e-9.
        #[test]
        fn cubic_reproduced_on_interior(a in -2.0..2.0f64, b in -2.0..2.0f64,
                                        c in -2.0..2.0f64, d in -2.0..2.0f64,
                                        t in 0.0..1.0f64) {
            let x = linspace(0.0, 3.0, 121);
            let f = |v: f64| a + b * v + c * v * v + d * v * v * v;
            let y: Vec<f64> = x.iter().map(|&v| f(v)).collect();
            let s = CubicSpline::new(&x, &y).unwrap();
            let q = 1.0 + t;
            prop_assert!((s.eval(q).unwrap() - f(q)).abs() < 1e-9);
        }
    }
}
