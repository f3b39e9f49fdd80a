//! Gaussian and super-Gaussian ISRF models fitted to a measurement window by
//! Nelder–Mead least squares.
//!
//! Models are written directly in the offset variable `x`:
//! `A·exp(−(x−μ)²/(2σ²))` and `A·exp(−|(x−μ)/w|^k)`. Amplitudes follow the
//! discrete unit-sum convention, so a unit-area density `p(x)` corresponds to
//! the sample amplitude `Δ·p(x)`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::forward::WindowedOperator;
use crate::grid::WavelengthGrid;
use crate::nelder_mead::{self, Minimum};

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3; // 2·√(2 ln 2)

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussParams {
    pub amplitude: f64,
    pub mu: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperGaussParams {
    pub amplitude: f64,
    pub mu: f64,
    pub w: f64,
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Gauss,
    SuperGauss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelParams {
    Gauss(GaussParams),
    SuperGauss(SuperGaussParams),
}

impl ModelParams {
    pub fn eval(&self, offsets: &[f64]) -> Vec<f64> {
        match self {
            ModelParams::Gauss(p) => eval_gauss(p, offsets),
            ModelParams::SuperGauss(p) => eval_supergauss(p, offsets),
        }
    }

    pub fn model(&self) -> Model {
        match self {
            ModelParams::Gauss(_) => Model::Gauss,
            ModelParams::SuperGauss(_) => Model::SuperGauss,
        }
    }

    /// Flat parameter list in the order `A, μ, σ²` or `A, μ, w, k`.
    pub fn values(&self) -> Vec<f64> {
        match self {
            ModelParams::Gauss(p) => vec![p.amplitude, p.mu, p.sigma2],
            ModelParams::SuperGauss(p) => vec![p.amplitude, p.mu, p.w, p.k],
        }
    }
}

pub fn eval_gauss(p: &GaussParams, offsets: &[f64]) -> Vec<f64> {
    offsets
        .iter()
        .map(|&x| p.amplitude * (-(x - p.mu).powi(2) / (2.0 * p.sigma2)).exp())
        .collect()
}

pub fn eval_supergauss(p: &SuperGaussParams, offsets: &[f64]) -> Vec<f64> {
    offsets
        .iter()
        .map(|&x| p.amplitude * (-((x - p.mu) / p.w).abs().powf(p.k)).exp())
        .collect()
}

/// Full width at half maximum of a sampled profile, with linear
/// interpolation of the half-maximum crossings. A side that never drops
/// below half maximum is cut at the end of the grid.
pub fn fwhm(values: &[f64], offsets: &[f64]) -> Result<f64> {
    if values.len() != offsets.len() || values.len() < 2 {
        return Err(Error::InvalidArgument("profile and offsets differ in length".into()));
    }
    let (peak, &max) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty");
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > min) || !max.is_finite() {
        return Err(Error::DegenerateInit("flat pilot profile".into()));
    }
    let half = 0.5 * max;
    let cross = |i: usize, j: usize| {
        // interpolate between sample i (above half) and j (below)
        let t = (values[i] - half) / (values[i] - values[j]);
        offsets[i] + t * (offsets[j] - offsets[i])
    };
    let left = (0..peak)
        .rev()
        .find(|&i| values[i] < half)
        .map(|i| cross(i + 1, i))
        .unwrap_or(offsets[0]);
    let right = (peak + 1..values.len())
        .find(|&i| values[i] < half)
        .map(|i| cross(i - 1, i))
        .unwrap_or(offsets[offsets.len() - 1]);
    Ok(right - left)
}

/// Gaussian starting point from a pilot ISRF: μ₀ is the pilot's weighted
/// mean offset, σ₀ = FWHM / (2√(2 ln 2)) and the amplitude is that of a
/// unit-area Gaussian, `Δ·(2πσ₀²)^{−1/2}`.
pub fn init_gauss(pilot: &[f64], grid: &WavelengthGrid) -> Result<GaussParams> {
    let offsets = grid.offsets();
    if pilot.len() != offsets.len() {
        return Err(Error::InvalidArgument(format!(
            "pilot has {} samples, grid has {}",
            pilot.len(),
            offsets.len()
        )));
    }
    let width = fwhm(pilot, &offsets)?;
    let sigma = width / FWHM_PER_SIGMA;
    if !(sigma > 0.0) {
        return Err(Error::DegenerateInit("zero pilot width".into()));
    }
    let total: f64 = pilot.iter().sum();
    let mu = if total != 0.0 {
        pilot.iter().zip(&offsets).map(|(p, x)| p * x).sum::<f64>() / total
    } else {
        0.0
    };
    Ok(GaussParams {
        amplitude: grid.delta() / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt(),
        mu,
        sigma2: sigma * sigma,
    })
}

/// Super-Gaussian starting point from a Gaussian one: `k₀ = 2`,
/// `w₀ = √2·σ₀` and `A₀ = Δ·(k₀/(2w₀))·Γ(1/k₀)`.
pub fn init_supergauss(g: &GaussParams, delta: f64) -> Result<SuperGaussParams> {
    let sigma = g.sigma2.sqrt();
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::DegenerateInit(format!("Gaussian variance {}", g.sigma2)));
    }
    let k = 2.0;
    let w = std::f64::consts::SQRT_2 * sigma;
    Ok(SuperGaussParams {
        amplitude: delta * k / (2.0 * w) * gamma(1.0 / k),
        mu: g.mu,
        w,
        k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub params: ModelParams,
    pub cost: f64,
    pub init_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Squared window residual `‖s − R·I‖²` with reusable buffers.
struct WindowCost<'a> {
    op: &'a WindowedOperator,
    s: &'a DVector<f64>,
    offsets: &'a [f64],
    model: DVector<f64>,
    pred: DVector<f64>,
}

impl<'a> WindowCost<'a> {
    fn new(op: &'a WindowedOperator, s: &'a DVector<f64>, offsets: &'a [f64]) -> Self {
        Self {
            op,
            s,
            offsets,
            model: DVector::zeros(offsets.len()),
            pred: DVector::zeros(s.len()),
        }
    }

    fn eval(&mut self, params: &ModelParams) -> f64 {
        match params {
            ModelParams::Gauss(p) => {
                let inv = -0.5 / p.sigma2;
                for (m, &x) in self.model.iter_mut().zip(self.offsets) {
                    *m = p.amplitude * ((x - p.mu).powi(2) * inv).exp();
                }
            }
            ModelParams::SuperGauss(p) => {
                for (m, &x) in self.model.iter_mut().zip(self.offsets) {
                    *m = p.amplitude * (-((x - p.mu) / p.w).abs().powf(p.k)).exp();
                }
            }
        }
        self.pred.gemv(1.0, self.op.matrix(), &self.model, 0.0);
        self.pred
            .iter()
            .zip(self.s.iter())
            .map(|(p, s)| (s - p).powi(2))
            .sum()
    }
}

fn check_window(op: &WindowedOperator, s: &DVector<f64>, offsets: &[f64]) -> Result<()> {
    let (rows, cols) = op.matrix().shape();
    if rows != s.len() || cols != offsets.len() {
        return Err(Error::InvalidArgument(format!(
            "operator is {rows}x{cols}, window has {} values and {} offsets",
            s.len(),
            offsets.len()
        )));
    }
    Ok(())
}

fn gauss_from(v: &[f64]) -> ModelParams {
    ModelParams::Gauss(GaussParams {
        amplitude: v[0],
        mu: v[1],
        sigma2: v[2].exp(),
    })
}

fn supergauss_from(v: &[f64]) -> ModelParams {
    ModelParams::SuperGauss(SuperGaussParams {
        amplitude: v[0],
        mu: v[1],
        w: v[2].exp(),
        k: v[3].exp(),
    })
}

fn finish(min: Minimum, init_cost: f64, from: fn(&[f64]) -> ModelParams) -> Fit {
    Fit {
        params: from(&min.x),
        cost: min.value,
        init_cost,
        iterations: min.iterations,
        converged: min.converged,
    }
}

/// Fits the Gaussian model over `(A, μ, ln σ²)`.
pub fn fit_gauss(
    op: &WindowedOperator,
    s: &DVector<f64>,
    grid: &WavelengthGrid,
    init: &GaussParams,
    opts: nelder_mead::Options,
) -> Result<Fit> {
    let offsets = grid.offsets();
    check_window(op, s, &offsets)?;
    if !(init.sigma2 > 0.0) {
        return Err(Error::DegenerateInit(format!("initial variance {}", init.sigma2)));
    }
    let mut cost = WindowCost::new(op, s, &offsets);
    let x0 = [init.amplitude, init.mu, init.sigma2.ln()];
    let init_cost = cost.eval(&gauss_from(&x0));
    let steps = [amplitude_step(init.amplitude), grid.delta(), 0.1];
    let min = nelder_mead::minimize(|v| cost.eval(&gauss_from(v)), &x0, &steps, opts);
    Ok(finish(min, init_cost, gauss_from))
}

/// Fits the super-Gaussian model over `(A, μ, ln w, ln k)`.
pub fn fit_supergauss(
    op: &WindowedOperator,
    s: &DVector<f64>,
    grid: &WavelengthGrid,
    init: &SuperGaussParams,
    opts: nelder_mead::Options,
) -> Result<Fit> {
    let offsets = grid.offsets();
    check_window(op, s, &offsets)?;
    if !(init.w > 0.0 && init.k > 0.0) {
        return Err(Error::DegenerateInit(format!("initial w {} and k {}", init.w, init.k)));
    }
    let mut cost = WindowCost::new(op, s, &offsets);
    let x0 = [init.amplitude, init.mu, init.w.ln(), init.k.ln()];
    let init_cost = cost.eval(&supergauss_from(&x0));
    let steps = [amplitude_step(init.amplitude), grid.delta(), 0.1, 0.1];
    let min = nelder_mead::minimize(|v| cost.eval(&supergauss_from(v)), &x0, &steps, opts);
    Ok(finish(min, init_cost, supergauss_from))
}

fn amplitude_step(a: f64) -> f64 {
    if a != 0.0 {
        0.1 * a.abs()
    } else {
        1e-3
    }
}

/// Dictionary-free pilot ISRF for a window: the unit-sum Gaussian whose
/// least-squares amplitude-scaled prediction best matches `s` over a
/// geometric scan of widths between Δ and a quarter of the grid half width.
pub fn pilot_gaussian(op: &WindowedOperator, s: &DVector<f64>, grid: &WavelengthGrid) -> Result<Vec<f64>> {
    let offsets = grid.offsets();
    check_window(op, s, &offsets)?;
    let lo = grid.delta();
    let hi = (0.25 * grid.half_width()).max(2.0 * lo);
    const STEPS: usize = 48;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..STEPS {
        let sigma = lo * (hi / lo).powf(i as f64 / (STEPS - 1) as f64);
        let mut g = eval_gauss(
            &GaussParams {
                amplitude: 1.0,
                mu: 0.0,
                sigma2: sigma * sigma,
            },
            &offsets,
        );
        let sum: f64 = g.iter().sum();
        g.iter_mut().for_each(|v| *v /= sum);
        let pred = op.apply(&g);
        let denom = pred.norm_squared();
        let scale = if denom > 0.0 { pred.dot(s) / denom } else { 0.0 };
        let res = (s - pred * scale).norm_squared();
        if best.as_ref().is_none_or(|(b, _)| res < *b) {
            best = Some((res, g));
        }
    }
    Ok(best.expect("scan is non-empty").1)
}
