//! Wavelength grids and sampled response functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset grid `delta * {-n_half, ..., n_half}` shared by every ISRF, plus the
/// centre wavelength of each spectral pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    delta: f64,
    n_half: usize,
    centers: Vec<f64>,
}

impl WavelengthGrid {
    pub fn new(delta: f64, n_half: usize, centers: Vec<f64>) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "offset step must be positive, got {delta}"
            )));
        }
        if centers.is_empty() {
            return Err(Error::InvalidArgument("grid has no centre wavelengths".into()));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite centre wavelength".into()));
        }
        if let Some(i) = centers.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(format!(
                "centre wavelengths not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self {
            delta,
            n_half,
            centers,
        })
    }

    /// Regularly spaced centres `start + i * step`, `i < count`.
    pub fn regular(delta: f64, n_half: usize, start: f64, step: f64, count: usize) -> Result<Self> {
        let centers = (0..count).map(|i| start + step * i as f64).collect();
        Self::new(delta, n_half, centers)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_half(&self) -> usize {
        self.n_half
    }

    /// Number of offset samples, `N + 1`.
    pub fn n_samples(&self) -> usize {
        2 * self.n_half + 1
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn n_centers(&self) -> usize {
        self.centers.len()
    }

    /// Offset of sample `i`, i.e. `(i - N/2) * delta`.
    pub fn offset(&self, i: usize) -> f64 {
        (i as f64 - self.n_half as f64) * self.delta
    }

    pub fn offsets(&self) -> Vec<f64> {
        (0..self.n_samples()).map(|i| self.offset(i)).collect()
    }

    /// Half extent `N/2 * delta` of the offset grid.
    pub fn half_width(&self) -> f64 {
        self.n_half as f64 * self.delta
    }
}

/// A sampled response on the offset grid of a [`WavelengthGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Isrf {
    values: Vec<f64>,
    center: f64,
}

impl Isrf {
    /// Builds a response from measured or synthetic samples; every value must
    /// be finite and non-negative.
    pub fn new(values: Vec<f64>, center: f64) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidIsrfValue(i));
        }
        Ok(Self { values, center })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Scales `isrf` so that its samples sum to one.
pub fn normalize(isrf: &Isrf) -> Result<Isrf> {
    let sum = isrf.sum();
    if !(sum > 0.0) {
        return Err(Error::ZeroIsrf);
    }
    // Already unit-sum vectors are returned untouched so that normalization
    // is exactly idempotent.
    if (sum - 1.0).abs() <= 1e-14 {
        return Ok(isrf.clone());
    }
    let values: Vec<f64> = isrf.values.iter().map(|v| v / sum).collect();
    Ok(Isrf {
        values,
        center: isrf.center,
    })
}
