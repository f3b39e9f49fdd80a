//! Sparse ISRF templates and their interpolation onto a dense wavelength grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{normalize, Isrf, WavelengthGrid};
use crate::spline::CubicSpline;

/// One tabulated response, on its own offset grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IsrfTemplate {
    pub center: f64,
    pub offsets: Vec<f64>,
    pub values: Vec<f64>,
}

impl IsrfTemplate {
    pub fn new(center: f64, offsets: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if offsets.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "template at {center} nm has {} offsets but {} values",
                offsets.len(),
                values.len()
            )));
        }
        if offsets.len() < 2 {
            return Err(Error::InvalidKnots(format!(
                "template at {center} nm has fewer than 2 samples"
            )));
        }
        if offsets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidKnots(format!(
                "template at {center} nm: offsets not strictly increasing"
            )));
        }
        Ok(Self {
            center,
            offsets,
            values,
        })
    }
}

/// Templates of one instrument, sorted by centre wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct IsrfTemplateSet {
    instrument: String,
    templates: Vec<IsrfTemplate>,
}

impl IsrfTemplateSet {
    pub fn new(instrument: impl Into<String>, mut templates: Vec<IsrfTemplate>) -> Result<Self> {
        if templates.len() < 2 {
            return Err(Error::InvalidKnots(format!(
                "need at least 2 templates to interpolate across wavelength, got {}",
                templates.len()
            )));
        }
        templates.sort_by(|a, b| a.center.total_cmp(&b.center));
        if templates.windows(2).any(|w| w[1].center <= w[0].center) {
            return Err(Error::InvalidKnots("duplicate template centre wavelength".into()));
        }
        Ok(Self {
            instrument: instrument.into(),
            templates,
        })
    }

    pub fn instrument(&self) -> &str {
        &self.instrument
    }

    pub fn templates(&self) -> &[IsrfTemplate] {
        &self.templates
    }

    pub fn centers(&self) -> Vec<f64> {
        self.templates.iter().map(|t| t.center).collect()
    }
}

/// Dense ISRF set produced by [`interpolate_isrf_set`].
#[derive(Debug, Clone)]
pub struct InterpolatedIsrfs {
    pub isrfs: Vec<Isrf>,
    /// Negative interpolation artefacts set to zero before normalization.
    pub clamped: usize,
}

/// Resamples every template onto the grid offsets, then interpolates each
/// offset sample across centre wavelength. Outputs are clamped at zero and
/// normalized to unit sum.
pub fn interpolate_isrf_set(
    templates: &IsrfTemplateSet,
    grid: &WavelengthGrid,
) -> Result<InterpolatedIsrfs> {
    let offsets = grid.offsets();
    let (first, last) = (offsets[0], offsets[offsets.len() - 1]);
    let t_centers = templates.centers();
    let (c_lo, c_hi) = (t_centers[0], t_centers[t_centers.len() - 1]);
    if let Some(c) = grid.centers().iter().find(|&&c| c < c_lo || c > c_hi) {
        return Err(Error::ExtrapolationRequired(format!(
            "grid centre {c} nm outside template range [{c_lo}, {c_hi}] nm"
        )));
    }

    // templates x offsets
    let resampled: Vec<Vec<f64>> = templates
        .templates()
        .iter()
        .map(|t| {
            let spline = CubicSpline::new(&t.offsets, &t.values)?;
            if !spline.contains(first) || !spline.contains(last) {
                return Err(Error::ExtrapolationRequired(format!(
                    "template at {} nm spans offsets [{}, {}] but grid needs [{first}, {last}]",
                    t.center,
                    t.offsets[0],
                    t.offsets[t.offsets.len() - 1]
                )));
            }
            offsets.iter().map(|&x| spline.eval(x)).collect()
        })
        .collect::<Result<_>>()?;

    // offsets x grid centres
    let columns: Vec<Vec<f64>> = (0..offsets.len())
        .into_par_iter()
        .map(|i| {
            let y: Vec<f64> = resampled.iter().map(|row| row[i]).collect();
            let spline = CubicSpline::new(&t_centers, &y)?;
            grid.centers().iter().map(|&c| spline.eval(c)).collect()
        })
        .collect::<Result<_>>()?;

    let mut clamped = 0;
    let mut isrfs = Vec::with_capacity(grid.n_centers());
    for (l, &center) in grid.centers().iter().enumerate() {
        let values: Vec<f64> = columns
            .iter()
            .map(|col| {
                let v = col[l];
                if v < 0.0 {
                    clamped += 1;
                    0.0
                } else {
                    v
                }
            })
            .collect();
        isrfs.push(normalize(&Isrf::new(values, center)?)?);
    }
    if clamped > 0 {
        log::warn!("{clamped} negative interpolated ISRF samples clamped to zero");
    }
    Ok(InterpolatedIsrfs { isrfs, clamped })
}
