//! Discrete forward model, sliding-window operators and synthetic noise.
//!
//! The measured value at centre `λ_l` is `s(λ_l) = Σ_n r(λ_l − nΔ) I_l(nΔ)`.
//! A row of the reference matrix therefore holds `r(λ_m − nΔ)` in the same
//! offset order as the ISRF samples (`n = −N/2 … N/2`), which means the
//! reference is read backwards relative to the ISRF.

use std::sync::Once;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Isrf, WavelengthGrid};
use crate::reference::ReferenceSpectrum;

/// Name of the noise generator, recorded next to every noisy measurement set.
pub const NOISE_RNG: &str = "chacha8(rand_chacha-0.9, seed_from_u64, stream=pixel index)+box-muller";

const DOMAIN_SLACK: f64 = 1e-9;

/// Samples `r(λ_m − nΔ)` for `n = −N/2 … N/2`.
pub fn reference_row(reference: &ReferenceSpectrum, grid: &WavelengthGrid, m: usize) -> Result<Vec<f64>> {
    let center = *grid
        .centers()
        .get(m)
        .ok_or_else(|| Error::OutOfRange(format!("centre index {m} >= {}", grid.n_centers())))?;
    (0..grid.n_samples())
        .map(|i| reference.eval(center - grid.offset(i)))
        .collect()
}

fn center_evaluable(center: f64, half_width: f64, domain: (f64, f64)) -> bool {
    let slack = DOMAIN_SLACK * (domain.1 - domain.0);
    center - half_width >= domain.0 - slack && center + half_width <= domain.1 + slack
}

/// Reference rows for every centre whose full offset span lies inside the
/// reference domain. Rows are shared by all windows that contain them.
#[derive(Debug, Clone)]
pub struct ReferenceRows {
    rows: Vec<Option<Vec<f64>>>,
    n_samples: usize,
}

impl ReferenceRows {
    pub fn new(reference: &ReferenceSpectrum, grid: &WavelengthGrid) -> Self {
        let domain = reference.domain();
        let hw = grid.half_width();
        let rows = grid
            .centers()
            .par_iter()
            .map(|&c| {
                center_evaluable(c, hw, domain).then(|| {
                    (0..grid.n_samples())
                        .map(|i| reference.eval_unchecked(c - grid.offset(i)))
                        .collect()
                })
            })
            .collect();
        Self {
            rows,
            n_samples: grid.n_samples(),
        }
    }

    pub fn row(&self, m: usize) -> Option<&[f64]> {
        self.rows.get(m).and_then(|r| r.as_deref())
    }

    pub fn is_evaluable(&self, m: usize) -> bool {
        self.row(m).is_some()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
}

/// Inclusive range `(l_min, l_max)` of zero-based centre indices whose whole
/// window `l − N_obs/2 … l + N_obs/2` exists and is evaluable.
pub fn valid_range(grid: &WavelengthGrid, n_obs: usize, domain: (f64, f64)) -> Result<(usize, usize)> {
    if !n_obs.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("N_obs must be even, got {n_obs}")));
    }
    let h = n_obs / 2;
    let hw = grid.half_width();
    let evaluable: Vec<bool> = grid
        .centers()
        .iter()
        .map(|&c| center_evaluable(c, hw, domain))
        .collect();
    let (first, last) = match (
        evaluable.iter().position(|&e| e),
        evaluable.iter().rposition(|&e| e),
    ) {
        (Some(f), Some(l)) => (f, l),
        _ => {
            return Err(Error::DomainTooSmall(format!(
                "no centre has its ±{hw} nm span inside [{}, {}] nm",
                domain.0, domain.1
            )))
        }
    };
    let l_min = first + h;
    match last.checked_sub(h) {
        Some(l_max) if l_min <= l_max => Ok((l_min, l_max)),
        _ => Err(Error::DomainTooSmall(format!(
            "evaluable centres {first}..={last} cannot hold a window of {} observations",
            n_obs + 1
        ))),
    }
}

/// Reference matrix `R_l` of a window centred on pixel `l`.
#[derive(Debug, Clone)]
pub struct WindowedOperator {
    matrix: DMatrix<f64>,
    center: usize,
    half_window: usize,
}

static UNDERDETERMINED: Once = Once::new();

impl WindowedOperator {
    /// Assembles `R_l` from precomputed reference rows.
    pub fn from_rows(rows: &ReferenceRows, l: usize, n_obs: usize) -> Result<Self> {
        if !n_obs.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("N_obs must be even, got {n_obs}")));
        }
        let h = n_obs / 2;
        if l < h || l + h >= rows.len() {
            return Err(Error::OutOfRange(format!(
                "window of half-width {h} around pixel {l} exceeds the grid of {} pixels",
                rows.len()
            )));
        }
        let n = rows.n_samples();
        let mut matrix = DMatrix::zeros(n_obs + 1, n);
        for j in 0..=n_obs {
            let m = l + j - h;
            let row = rows.row(m).ok_or_else(|| {
                Error::OutOfRange(format!("pixel {m} in window of {l} leaves the reference domain"))
            })?;
            for (i, &v) in row.iter().enumerate() {
                matrix[(j, i)] = v;
            }
        }
        if n_obs + 1 < n {
            UNDERDETERMINED.call_once(|| {
                log::debug!(
                    "window has {} observations for {n} ISRF samples; relying on a low-dimensional model",
                    n_obs + 1
                )
            });
        }
        Ok(Self {
            matrix,
            center: l,
            half_window: h,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn half_window(&self) -> usize {
        self.half_window
    }

    pub fn apply(&self, isrf: &[f64]) -> DVector<f64> {
        &self.matrix * DVector::from_column_slice(isrf)
    }
}

/// Builds `R_l` directly from the reference spectrum.
pub fn build_window_operator(
    reference: &ReferenceSpectrum,
    grid: &WavelengthGrid,
    l: usize,
    n_obs: usize,
) -> Result<WindowedOperator> {
    let (l_min, l_max) = valid_range(grid, n_obs, reference.domain()).map_err(|e| match e {
        Error::DomainTooSmall(msg) => Error::OutOfRange(msg),
        other => other,
    })?;
    if l < l_min || l > l_max {
        return Err(Error::OutOfRange(format!(
            "pixel {l} outside the valid range {l_min}..={l_max} for N_obs = {n_obs}"
        )));
    }
    let h = n_obs / 2;
    let n = grid.n_samples();
    let mut matrix = DMatrix::zeros(n_obs + 1, n);
    for j in 0..=n_obs {
        let row = reference_row(reference, grid, l + j - h)?;
        for (i, v) in row.into_iter().enumerate() {
            matrix[(j, i)] = v;
        }
    }
    Ok(WindowedOperator {
        matrix,
        center: l,
        half_window: h,
    })
}

/// Spectrum sampled at the grid centres, with a validity mask for pixels
/// whose forward model could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub centers: Vec<f64>,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    /// `None` for noise-free data.
    pub snr_db: Option<f64>,
    pub sigma: f64,
    pub seed: Option<u64>,
    pub rng: Option<String>,
}

impl MeasurementSet {
    pub fn noise_free(centers: Vec<f64>, values: Vec<f64>, valid: Vec<bool>) -> Self {
        Self {
            centers,
            values,
            valid,
            snr_db: None,
            sigma: 0.0,
            seed: None,
            rng: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Observations `s(λ_{l−h}) … s(λ_{l+h})`.
    pub fn window(&self, l: usize, n_obs: usize) -> Result<DVector<f64>> {
        let h = n_obs / 2;
        if l < h || l + h >= self.values.len() {
            return Err(Error::OutOfRange(format!("window around {l} exceeds measurements")));
        }
        if let Some(j) = (l - h..=l + h).find(|&m| !self.valid[m]) {
            return Err(Error::OutOfRange(format!("measurement {j} in window of {l} is invalid")));
        }
        Ok(DVector::from_column_slice(&self.values[l - h..=l + h]))
    }

    /// Mean squared value over valid pixels.
    pub fn mean_square(&self) -> f64 {
        let (sum, count) = self
            .values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold((0.0, 0usize), |(s, c), (v, _)| (s + v * v, c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

/// Noise-free forward model: one measurement per centre using that centre's
/// own ISRF. Centres whose span leaves the reference domain are marked invalid.
pub fn convolve_forward(
    reference: &ReferenceSpectrum,
    isrfs: &[Isrf],
    grid: &WavelengthGrid,
) -> Result<MeasurementSet> {
    let rows = ReferenceRows::new(reference, grid);
    convolve_with_rows(&rows, isrfs, grid)
}

pub fn convolve_with_rows(rows: &ReferenceRows, isrfs: &[Isrf], grid: &WavelengthGrid) -> Result<MeasurementSet> {
    if isrfs.len() != grid.n_centers() {
        return Err(Error::InvalidArgument(format!(
            "{} ISRFs for {} grid centres",
            isrfs.len(),
            grid.n_centers()
        )));
    }
    if let Some(i) = isrfs.iter().position(|r| r.len() != grid.n_samples()) {
        return Err(Error::InvalidArgument(format!(
            "ISRF {i} has {} samples, grid expects {}",
            isrfs[i].len(),
            grid.n_samples()
        )));
    }
    let mut values = Vec::with_capacity(isrfs.len());
    let mut valid = Vec::with_capacity(isrfs.len());
    for (m, isrf) in isrfs.iter().enumerate() {
        match rows.row(m) {
            Some(row) => {
                values.push(row.iter().zip(isrf.values()).map(|(r, i)| r * i).sum());
                valid.push(true);
            }
            None => {
                values.push(0.0);
                valid.push(false);
            }
        }
    }
    if !valid.iter().any(|&v| v) {
        return Err(Error::DomainTooSmall(
            "reference spectrum does not cover the span of any centre".into(),
        ));
    }
    Ok(MeasurementSet::noise_free(grid.centers().to_vec(), values, valid))
}

/// Standard normal draw from the substream of pixel `index`.
pub(crate) fn pixel_gaussian(seed: u64, index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    // (0, 1] so the logarithm is finite.
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64;
    let u2 = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Adds white Gaussian noise at the requested SNR (dB, power ratio against the
/// mean squared signal over valid pixels). `snr_db = +∞` returns the input
/// unchanged apart from the recorded metadata.
pub fn add_noise(s: &MeasurementSet, snr_db: f64, seed: u64) -> Result<MeasurementSet> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(format!("SNR must be finite or +inf, got {snr_db}")));
    }
    let mut out = s.clone();
    out.seed = Some(seed);
    out.rng = Some(NOISE_RNG.to_string());
    if snr_db == f64::INFINITY {
        out.snr_db = None;
        out.sigma = 0.0;
        return Ok(out);
    }
    let sigma = (s.mean_square() * 10f64.powf(-snr_db / 10.0)).sqrt();
    out.snr_db = Some(snr_db);
    out.sigma = sigma;
    out.values
        .par_iter_mut()
        .zip(&s.valid)
        .enumerate()
        .for_each(|(l, (v, &ok))| {
            if ok {
                *v += sigma * pixel_gaussian(seed, l as u64);
            }
        });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::normalize;

    fn ramp_reference() -> ReferenceSpectrum {
        let x: Vec<f64> = (0..=200).map(|i| 90.0 + 0.1 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 0.3 * (v * 1.7).sin() + 0.01 * v).collect();
        ReferenceSpectrum::new(&x, &y).unwrap()
    }

    fn grid() -> WavelengthGrid {
        WavelengthGrid::regular(0.1, 4, 95.0, 0.2, 21).unwrap()
    }

    fn delta_at(n_samples: usize, idx: usize, center: f64) -> Isrf {
        let mut v = vec![0.0; n_samples];
        v[idx] = 1.0;
        Isrf::new(v, center).unwrap()
    }

    #[test]
    fn identity_kernel_reads_reference() {
        let r = ramp_reference();
        let g = grid();
        let isrfs: Vec<Isrf> = g.centers().iter().map(|&c| delta_at(9, 4, c)).collect();
        let s = convolve_forward(&r, &isrfs, &g).unwrap();
        for (l, &c) in g.centers().iter().enumerate() {
            assert!(s.valid[l]);
            assert_eq!(s.values[l], r.eval(c).unwrap());
        }
    }

    #[test]
    fn shifted_delta_fixes_flip_convention() {
        let r = ramp_reference();
        let g = grid();
        // sample index 5 is offset n = +1
        let isrfs: Vec<Isrf> = g.centers().iter().map(|&c| delta_at(9, 5, c)).collect();
        let s = convolve_forward(&r, &isrfs, &g).unwrap();
        for (l, &c) in g.centers().iter().enumerate() {
            assert!((s.values[l] - r.eval(c - 0.1).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn unit_dc_gain() {
        let x: Vec<f64> = (0..50).map(|i| 80.0 + i as f64).collect();
        let r = ReferenceSpectrum::new(&x, &vec![2.5; 50]).unwrap();
        let g = grid();
        let isrfs: Vec<Isrf> = g
            .centers()
            .iter()
            .map(|&c| {
                let raw: Vec<f64> = (0..9).map(|i| 1.0 + (i as f64 * 0.9).cos().abs()).collect();
                normalize(&Isrf::new(raw, c).unwrap()).unwrap()
            })
            .collect();
        let s = convolve_forward(&r, &isrfs, &g).unwrap();
        assert!(s.values.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn valid_range_cases() {
        let g = grid(); // centres 95..99, half width 0.4
        let ample = (80.0, 120.0);
        assert_eq!(valid_range(&g, 0, ample).unwrap(), (0, 20));
        assert_eq!(valid_range(&g, 4, ample).unwrap(), (2, 18));
        assert!(matches!(valid_range(&g, 3, ample), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            valid_range(&g, 0, (200.0, 300.0)),
            Err(Error::DomainTooSmall(_))
        ));
        assert!(matches!(valid_range(&g, 40, ample), Err(Error::DomainTooSmall(_))));
    }

    #[test]
    fn valid_range_matches_enumeration() {
        let g = grid();
        for &(lo, hi) in &[(94.6, 97.0), (96.0, 99.4), (95.5, 98.1), (94.0, 100.0)] {
            for n_obs in [0usize, 2, 4] {
                let h = n_obs / 2;
                let evaluable = |m: usize| {
                    let c = g.centers()[m];
                    c - 0.4 >= lo - 1e-9 && c + 0.4 <= hi + 1e-9
                };
                let brute: Vec<usize> = (h..g.n_centers() - h)
                    .filter(|&l| (l - h..=l + h).all(evaluable))
                    .collect();
                match valid_range(&g, n_obs, (lo, hi)) {
                    Ok((a, b)) => assert_eq!((a..=b).collect::<Vec<_>>(), brute),
                    Err(_) => assert!(brute.is_empty()),
                }
            }
        }
    }

    #[test]
    fn single_row_operator_is_flipped_reference() {
        let r = ramp_reference();
        let g = grid();
        let op = build_window_operator(&r, &g, 10, 0).unwrap();
        assert_eq!(op.matrix().nrows(), 1);
        for i in 0..9 {
            let expected = r.eval(g.centers()[10] - g.offset(i)).unwrap();
            assert_eq!(op.matrix()[(0, i)], expected);
        }
        // first column holds the largest wavelength
        assert!(op.matrix()[(0, 0)] == r.eval(g.centers()[10] + 0.4).unwrap());
    }

    #[test]
    fn operator_on_delta_gives_window_reference() {
        let r = ramp_reference();
        let g = grid();
        let op = build_window_operator(&r, &g, 7, 4).unwrap();
        let out = op.apply(delta_at(9, 4, 0.0).values());
        for j in 0..5 {
            assert_eq!(out[j], r.eval(g.centers()[5 + j]).unwrap());
        }
    }

    #[test]
    fn operator_rows_match_direct_sums() {
        let r = ramp_reference();
        let g = grid();
        let weights: Vec<f64> = (0..9).map(|i| ((i * 7 % 5) as f64 + 0.5) / 10.0).collect();
        let op = build_window_operator(&r, &g, 9, 4).unwrap();
        let out = op.apply(&weights);
        for j in 0..5 {
            let c = g.centers()[7 + j];
            let direct: f64 = (-4i32..=4)
                .map(|n| r.eval(c - n as f64 * 0.1).unwrap() * weights[(n + 4) as usize])
                .sum();
            assert!((out[j] - direct).abs() < 1e-13);
        }
        let from_rows = WindowedOperator::from_rows(&ReferenceRows::new(&r, &g), 9, 4).unwrap();
        assert_eq!(from_rows.matrix(), op.matrix());
    }

    #[test]
    fn window_outside_range_is_error() {
        let r = ramp_reference();
        let g = grid();
        assert!(matches!(build_window_operator(&r, &g, 1, 4), Err(Error::OutOfRange(_))));
        assert!(matches!(build_window_operator(&r, &g, 19, 4), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn infinite_snr_is_identity() {
        let s = MeasurementSet::noise_free(vec![1.0, 2.0], vec![3.0, 4.0], vec![true, true]);
        let n = add_noise(&s, f64::INFINITY, 9).unwrap();
        assert_eq!(n.values, s.values);
        assert_eq!(n.sigma, 0.0);
    }

    #[test]
    fn sigma_from_snr() {
        let s = MeasurementSet::noise_free(vec![0.0; 10], vec![1.0; 10], vec![true; 10]);
        let n = add_noise(&s, 20.0, 1).unwrap();
        assert!((n.sigma - 0.1).abs() < 1e-15);
    }

    #[test]
    fn empirical_snr_monte_carlo() {
        let count = 1_000_000;
        let signal: Vec<f64> = (0..count).map(|i| 1.0 + 0.5 * ((i % 97) as f64 / 97.0)).collect();
        let s = MeasurementSet::noise_free(vec![0.0; count], signal.clone(), vec![true; count]);
        let n = add_noise(&s, 30.0, 2024).unwrap();
        let p_signal = signal.iter().map(|v| v * v).sum::<f64>() / count as f64;
        let p_noise = n
            .values
            .iter()
            .zip(&signal)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / count as f64;
        let snr = 10.0 * (p_signal / p_noise).log10();
        assert!((snr - 30.0).abs() < 0.1, "empirical SNR {snr}");
    }

    #[test]
    fn noise_is_seed_deterministic_and_skips_invalid() {
        let s = MeasurementSet::noise_free(vec![0.0; 5], vec![1.0; 5], vec![true, true, false, true, true]);
        let a = add_noise(&s, 10.0, 5).unwrap();
        let b = add_noise(&s, 10.0, 5).unwrap();
        let c = add_noise(&s, 10.0, 6).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
        assert_eq!(a.values[2], 1.0);
    }
}
