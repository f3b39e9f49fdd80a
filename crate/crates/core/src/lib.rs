//! Estimation of instrument spectral response functions (ISRFs) from a
//! measured spectrum and a known reference spectrum.
//!
//! Two families of estimators are provided: sparse decompositions in a
//! learned dictionary of ISRF atoms (OMP or LASSO coding over SVD or K-SVD
//! dictionaries) and Gaussian / super-Gaussian parametric fits. The
//! [`eval`] module drives per-wavelength estimation and the experiment sweeps.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coder;
pub mod dictionary;
pub mod error;
pub mod eval;
pub mod forward;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod nelder_mead;
pub mod parametric;
pub mod reference;
pub mod spline;
pub mod synthetic;
pub mod templates;

pub use error::{Error, Result};
pub use grid::{normalize, Isrf, WavelengthGrid};
pub use reference::ReferenceSpectrum;
pub use spline::CubicSpline;
pub use templates::{interpolate_isrf_set, IsrfTemplate, IsrfTemplateSet};
