use crate::error::Result;
use crate::spline::CubicSpline;

/// Known scene spectrum `r(λ)`, interpolated by a natural cubic spline
/// through tabulated `(wavelength nm, radiance)` knots.
#[derive(Debug, Clone)]
pub struct ReferenceSpectrum {
    spline: CubicSpline,
}

impl ReferenceSpectrum {
    pub fn new(wavelengths: &[f64], radiance: &[f64]) -> Result<Self> {
        Ok(Self {
            spline: CubicSpline::new(wavelengths, radiance)?,
        })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        Self::new(&x, &y)
    }

    pub fn domain(&self) -> (f64, f64) {
        self.spline.domain()
    }

    pub fn contains(&self, wavelength: f64) -> bool {
        self.spline.contains(wavelength)
    }

    /// True when the whole interval `[lo, hi]` can be evaluated.
    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        self.contains(lo) && self.contains(hi)
    }

    pub fn eval(&self, wavelength: f64) -> Result<f64> {
        self.spline.eval(wavelength)
    }

    pub(crate) fn eval_unchecked(&self, wavelength: f64) -> f64 {
        let (lo, hi) = self.domain();
        self.spline.eval_clamped(wavelength.clamp(lo, hi))
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        self.spline.knots()
    }
}
