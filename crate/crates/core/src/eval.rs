//! Error metrics, the per-wavelength estimation driver and the experiment
//! sweeps.
//!
//! Every estimate is computed independently per window and assembled in
//! wavelength order, so results do not depend on the thread count.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coder::{self, EffectiveDictionary, SparseCode};
use crate::dictionary::{self, Dictionary, DictionaryKind, DictionaryMethod, KsvdParams};
use crate::error::{Error, Result};
use crate::forward::{add_noise, valid_range, MeasurementSet, ReferenceRows, WindowedOperator};
use crate::grid::{Isrf, WavelengthGrid};
use crate::nelder_mead;
use crate::parametric::{self, Fit};
use crate::reference::ReferenceSpectrum;

/// Normalized absolute error `Σ|I − Î| / Σ I`.
pub fn metric_e(truth: &Isrf, estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(Error::InvalidArgument(format!(
            "truth has {} samples, estimate {}",
            truth.len(),
            estimate.len()
        )));
    }
    let total = truth.sum();
    if total <= 0.0 {
        return Err(Error::ZeroIsrf);
    }
    let abs: f64 = truth
        .values()
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(abs / total)
}

/// Mean of the per-window squared residuals `‖s_l − R_l Î_l‖²`.
pub fn metric_rho(squared_residuals: &[f64]) -> f64 {
    if squared_residuals.is_empty() {
        return 0.0;
    }
    squared_residuals.iter().sum::<f64>() / squared_residuals.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "gauss")]
    Gauss,
    #[serde(rename = "supergauss")]
    SuperGauss,
    #[serde(rename = "omp-svd")]
    OmpSvd,
    #[serde(rename = "omp-ksvd")]
    OmpKsvd,
    #[serde(rename = "lasso-svd")]
    LassoSvd,
    #[serde(rename = "lasso-ksvd")]
    LassoKsvd,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Gauss,
        Method::SuperGauss,
        Method::OmpSvd,
        Method::OmpKsvd,
        Method::LassoSvd,
        Method::LassoKsvd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gauss => "gauss",
            Method::SuperGauss => "supergauss",
            Method::OmpSvd => "omp-svd",
            Method::OmpKsvd => "omp-ksvd",
            Method::LassoSvd => "lasso-svd",
            Method::LassoKsvd => "lasso-ksvd",
        }
    }

    pub fn is_sparse(self) -> bool {
        self.dictionary().is_some()
    }

    pub fn dictionary(self) -> Option<DictionaryMethod> {
        match self {
            Method::Gauss | Method::SuperGauss => None,
            Method::OmpSvd | Method::LassoSvd => Some(DictionaryMethod::Svd),
            Method::OmpKsvd | Method::LassoKsvd => Some(DictionaryMethod::Ksvd),
        }
    }

    fn is_lasso(self) -> bool {
        matches!(self, Method::LassoSvd | Method::LassoKsvd)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match key.as_str() {
            "super-gauss" | "supergaussian" | "super-gaussian" => "supergauss",
            "gaussian" => "gauss",
            other => other,
        };
        Method::ALL
            .into_iter()
            .find(|m| m.name() == alias)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Where the parametric fits take the ISRF used for their starting point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PilotSource {
    /// The provided pilot ISRFs when the dataset has them, else the scan.
    #[default]
    Auto,
    Provided,
    /// Dictionary-free Gaussian width scan of each window.
    Scan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub n_obs: usize,
    /// OMP sparsity, and LASSO target support size when `lasso_gamma` is
    /// unset.
    pub k: usize,
    pub lasso_gamma: Option<f64>,
    pub pilot: PilotSource,
    pub max_iter: usize,
    pub diameter_tol: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        let nm = nelder_mead::Options::default();
        Self {
            n_obs: 40,
            k: 4,
            lasso_gamma: None,
            pilot: PilotSource::Auto,
            max_iter: nm.max_iter,
            diameter_tol: nm.diameter_tol,
        }
    }
}

impl EstimateConfig {
    fn nm(&self) -> nelder_mead::Options {
        nelder_mead::Options {
            max_iter: self.max_iter,
            diameter_tol: self.diameter_tol,
        }
    }
}

/// Reference, grid and measurements, plus optional truth, pilot ISRFs and
/// dictionaries. Cloning is cheap: the reference rows are shared.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub grid: WavelengthGrid,
    pub reference: Arc<ReferenceSpectrum>,
    pub rows: Arc<ReferenceRows>,
    pub measurements: MeasurementSet,
    pub truth: Option<Arc<Vec<Isrf>>>,
    pub pilots: Option<Arc<Vec<Isrf>>>,
    pub svd: Option<Arc<Dictionary>>,
    pub ksvd: Option<Arc<Dictionary>>,
}

impl Dataset {
    pub fn new(grid: WavelengthGrid, reference: ReferenceSpectrum, measurements: MeasurementSet) -> Result<Self> {
        if measurements.len() != grid.n_centers() {
            return Err(Error::InvalidArgument(format!(
                "{} measurements for {} centres",
                measurements.len(),
                grid.n_centers()
            )));
        }
        let rows = ReferenceRows::new(&reference, &grid);
        Ok(Self {
            grid,
            reference: Arc::new(reference),
            rows: Arc::new(rows),
            measurements,
            truth: None,
            pilots: None,
            svd: None,
            ksvd: None,
        })
    }

    pub fn with_truth(mut self, truth: Vec<Isrf>) -> Result<Self> {
        self.check_isrfs(&truth, "truth")?;
        self.truth = Some(Arc::new(truth));
        Ok(self)
    }

    pub fn with_pilots(mut self, pilots: Vec<Isrf>) -> Result<Self> {
        self.check_isrfs(&pilots, "pilot")?;
        self.pilots = Some(Arc::new(pilots));
        Ok(self)
    }

    pub fn with_dictionary(mut self, dict: Dictionary) -> Result<Self> {
        if dict.n_samples() != self.grid.n_samples() {
            return Err(Error::InvalidArgument(format!(
                "dictionary atoms have {} samples, grid has {}",
                dict.n_samples(),
                self.grid.n_samples()
            )));
        }
        match dict.method() {
            Some(DictionaryMethod::Ksvd) => self.ksvd = Some(Arc::new(dict)),
            _ => self.svd = Some(Arc::new(dict)),
        }
        Ok(self)
    }

    /// Same instrument with other measurements; `truth` replaces the current
    /// truth when given.
    pub fn with_measurements(&self, measurements: MeasurementSet, truth: Option<Vec<Isrf>>) -> Result<Self> {
        if measurements.len() != self.grid.n_centers() {
            return Err(Error::InvalidArgument("measurement count differs from grid".into()));
        }
        let mut out = self.clone();
        out.measurements = measurements;
        if let Some(t) = truth {
            out = out.with_truth(t)?;
        }
        Ok(out)
    }

    fn check_isrfs(&self, isrfs: &[Isrf], what: &str) -> Result<()> {
        if isrfs.len() != self.grid.n_centers() {
            return Err(Error::InvalidArgument(format!(
                "{} {what} ISRFs for {} centres",
                isrfs.len(),
                self.grid.n_centers()
            )));
        }
        if let Some(i) = isrfs.iter().position(|v| v.len() != self.grid.n_samples()) {
            return Err(Error::InvalidArgument(format!("{what} ISRF {i} has the wrong length")));
        }
        Ok(())
    }

    fn dictionary(&self, method: DictionaryMethod) -> Option<&Dictionary> {
        match method {
            DictionaryMethod::Svd => self.svd.as_deref(),
            DictionaryMethod::Ksvd => self.ksvd.as_deref(),
        }
    }

    /// Centres whose whole window is evaluable and measured.
    pub fn windows(&self, n_obs: usize) -> Result<Vec<usize>> {
        let (lo, hi) = valid_range(&self.grid, n_obs, self.reference.domain())?;
        let h = n_obs / 2;
        let ids: Vec<usize> = (lo..=hi)
            .filter(|&l| (l - h..=l + h).all(|m| self.measurements.valid[m]))
            .collect();
        if ids.is_empty() {
            return Err(Error::DomainTooSmall("no window is fully measured".into()));
        }
        Ok(ids)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Detail {
    Sparse(SparseCode),
    Parametric(Fit),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowEstimate {
    pub index: usize,
    pub center: f64,
    pub estimate: Vec<f64>,
    pub detail: Detail,
    pub error: Option<f64>,
    pub residual_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationResult {
    pub method: Method,
    pub config: EstimateConfig,
    pub windows: Vec<WindowEstimate>,
    pub mean_error: Option<f64>,
    pub rho: f64,
}

impl EstimationResult {
    fn assemble(method: Method, config: EstimateConfig, windows: Vec<WindowEstimate>) -> Self {
        let errors: Option<Vec<f64>> = windows.iter().map(|w| w.error).collect();
        let mean_error = errors.filter(|e| !e.is_empty()).map(|e| e.iter().sum::<f64>() / e.len() as f64);
        let residuals: Vec<f64> = windows.iter().map(|w| w.residual_sq).collect();
        Self {
            method,
            config,
            rho: metric_rho(&residuals),
            mean_error,
            windows,
        }
    }

    pub fn errors(&self) -> Vec<f64> {
        self.windows.iter().filter_map(|w| w.error).collect()
    }
}

/// `ψ_m = Φᵀ r_m` for every evaluable pixel; the rows of any `Ψ_l`.
struct ProjectedRows {
    rows: Vec<Option<DVector<f64>>>,
    n_atoms: usize,
}

impl ProjectedRows {
    fn new(rows: &ReferenceRows, dict: &Dictionary) -> Self {
        let atoms = dict.atoms();
        let rows = (0..rows.len())
            .into_par_iter()
            .map(|m| {
                rows.row(m)
                    .map(|r| atoms.tr_mul(&DVector::from_column_slice(r)))
            })
            .collect();
        Self {
            rows,
            n_atoms: atoms.ncols(),
        }
    }

    fn window(&self, l: usize, n_obs: usize) -> Result<EffectiveDictionary> {
        let h = n_obs / 2;
        let mut psi = DMatrix::zeros(n_obs + 1, self.n_atoms);
        for (j, m) in (l - h..=l + h).enumerate() {
            let row = self.rows[m]
                .as_ref()
                .ok_or_else(|| Error::OutOfRange(format!("reference row {m} not evaluable")))?;
            psi.row_mut(j).copy_from(&row.transpose());
        }
        EffectiveDictionary::new(psi)
    }
}

fn sparse_code(method: Method, psi: &EffectiveDictionary, s: &DVector<f64>, cfg: &EstimateConfig) -> Result<SparseCode> {
    if !method.is_lasso() {
        return coder::omp(psi, s, cfg.k);
    }
    match cfg.lasso_gamma {
        None => coder::lasso_target_k(psi, s, cfg.k),
        Some(gamma) => {
            let code = coder::lasso(psi, s, gamma)?;
            if code.support.is_empty() {
                Ok(code)
            } else {
                coder::debias(psi, s, &code)
            }
        }
    }
}

/// Runs `method` on every valid window of `data`.
pub fn estimate_all(method: Method, data: &Dataset, cfg: &EstimateConfig) -> Result<EstimationResult> {
    if !cfg.n_obs.is_multiple_of(2) {
        return Err(Error::Config(format!("n_obs must be even, got {}", cfg.n_obs)));
    }
    let ids = data.windows(cfg.n_obs)?;
    let centers = data.grid.centers();
    let truth = data.truth.as_deref();
    let error_at = |l: usize, est: &[f64]| truth.map(|t| metric_e(&t[l], est)).transpose();

    let windows: Vec<WindowEstimate> = match method.dictionary() {
        Some(kind) => {
            if cfg.k == 0 {
                return Err(Error::Config("K must be >= 1".into()));
            }
            let dict = data
                .dictionary(kind)
                .ok_or_else(|| Error::Config(format!("method {method} needs a {} dictionary", kind.as_str())))?;
            let projected = ProjectedRows::new(&data.rows, dict);
            ids.par_iter()
                .map(|&l| {
                    let s = data.measurements.window(l, cfg.n_obs)?;
                    let psi = projected.window(l, cfg.n_obs)?;
                    let code = sparse_code(method, &psi, &s, cfg)?;
                    let estimate = coder::reconstruct_isrf(dict, &code)?;
                    Ok(WindowEstimate {
                        index: l,
                        center: centers[l],
                        error: error_at(l, &estimate)?,
                        residual_sq: code.residual_norm.powi(2),
                        estimate,
                        detail: Detail::Sparse(code),
                    })
                })
                .collect::<Result<_>>()?
        }
        None => {
            let pilots = match cfg.pilot {
                PilotSource::Scan => None,
                PilotSource::Auto => data.pilots.as_deref(),
                PilotSource::Provided => Some(
                    data.pilots
                        .as_deref()
                        .ok_or_else(|| Error::Config("pilot source `provided` but no pilot ISRFs".into()))?,
                ),
            };
            let offsets = data.grid.offsets();
            ids.par_iter()
                .map(|&l| {
                    let s = data.measurements.window(l, cfg.n_obs)?;
                    let op = WindowedOperator::from_rows(&data.rows, l, cfg.n_obs)?;
                    let pilot = match pilots {
                        Some(p) => p[l].values().to_vec(),
                        None => parametric::pilot_gaussian(&op, &s, &data.grid)?,
                    };
                    let g0 = parametric::init_gauss(&pilot, &data.grid)?;
                    let fit = match method {
                        Method::Gauss => parametric::fit_gauss(&op, &s, &data.grid, &g0, cfg.nm())?,
                        _ => {
                            let sg0 = parametric::init_supergauss(&g0, data.grid.delta())?;
                            parametric::fit_supergauss(&op, &s, &data.grid, &sg0, cfg.nm())?
                        }
                    };
                    let estimate = fit.params.eval(&offsets);
                    Ok(WindowEstimate {
                        index: l,
                        center: centers[l],
                        error: error_at(l, &estimate)?,
                        residual_sq: fit.cost,
                        estimate,
                        detail: Detail::Parametric(fit),
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(EstimationResult::assemble(method, *cfg, windows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KRow {
    pub k: usize,
    pub mean_error: Option<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSweep {
    pub method: Method,
    pub rows: Vec<KRow>,
    /// K with the lowest mean error (first on ties), when truth is known.
    pub best_k: Option<usize>,
}

impl KSweep {
    pub fn row(&self, k: usize) -> Option<&KRow> {
        self.rows.iter().find(|r| r.k == k)
    }
}

/// Mean error and ρ of a sparse method for each K.
pub fn sweep_k(data: &Dataset, method: Method, ks: &[usize], cfg: &EstimateConfig) -> Result<KSweep> {
    if !method.is_sparse() {
        return Err(Error::Config(format!("K sweep needs a sparse method, got {method}")));
    }
    if ks.contains(&0) {
        return Err(Error::Config("K must be >= 1".into()));
    }
    let rows = ks
        .iter()
        .map(|&k| {
            let r = estimate_all(method, data, &EstimateConfig { k, ..*cfg })?;
            Ok(KRow {
                k,
                mean_error: r.mean_error,
                rho: r.rho,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best_k = rows
        .iter()
        .filter_map(|r| r.mean_error.map(|e| (r.k, e)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k);
    Ok(KSweep { method, rows, best_k })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrCell {
    pub method: Method,
    /// `None` stands for the noise-free column.
    pub snr_db: Option<f64>,
    /// Mean over replicates of each run's mean error.
    pub mean_error: Option<f64>,
    pub rho: f64,
    pub replicates: usize,
    pub below_one_percent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrTable {
    pub methods: Vec<Method>,
    pub snr_db: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Row-major: one row per method, one column per SNR.
    pub cells: Vec<SnrCell>,
}

impl SnrTable {
    pub fn cell(&self, method: Method, snr_db: f64) -> Option<&SnrCell> {
        let j = self.snr_db.iter().position(|&s| s == snr_db || (s.is_infinite() && snr_db.is_infinite()))?;
        let i = self.methods.iter().position(|&m| m == method)?;
        self.cells.get(i * self.snr_db.len() + j)
    }
}

/// Default SNR grid in dB.
pub const DEFAULT_SNR_DB: [f64; 5] = [20.0, 40.0, 55.0, 80.0, 120.0];

/// Replicate seeds `base, base+1, …`. The same seed is reused across SNR
/// levels, so each replicate sees one noise pattern at different scales.
pub fn replicate_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i)).collect()
}

/// Mean error and ρ per method and SNR, averaged over noise replicates.
/// `data.measurements` must be noise-free; `f64::INFINITY` requests the
/// noise-free column.
pub fn sweep_snr(
    data: &Dataset,
    methods: &[Method],
    snr_db: &[f64],
    seeds: &[u64],
    cfg: &EstimateConfig,
) -> Result<SnrTable> {
    if methods.is_empty() || snr_db.is_empty() || seeds.is_empty() {
        return Err(Error::Config("SNR sweep needs methods, SNR values and seeds".into()));
    }
    if data.measurements.snr_db.is_some() {
        return Err(Error::Config("SNR sweep needs noise-free measurements".into()));
    }
    let mut cells = Vec::with_capacity(methods.len() * snr_db.len());
    for &method in methods {
        for &snr in snr_db {
            let reps: Vec<u64> = if snr.is_infinite() { vec![seeds[0]] } else { seeds.to_vec() };
            let runs = reps
                .iter()
                .map(|&seed| {
                    let noisy = add_noise(&data.measurements, snr, seed)?;
                    let d = data.with_measurements(noisy, None)?;
                    estimate_all(method, &d, cfg)
                })
                .collect::<Result<Vec<_>>>()?;
            let errs: Option<Vec<f64>> = runs.iter().map(|r| r.mean_error).collect();
            let mean_error = errs.map(|e| e.iter().sum::<f64>() / e.len() as f64);
            cells.push(SnrCell {
                method,
                snr_db: snr.is_finite().then_some(snr),
                mean_error,
                rho: runs.iter().map(|r| r.rho).sum::<f64>() / runs.len() as f64,
                replicates: runs.len(),
                below_one_percent: mean_error.map(|e| e < 0.01),
            });
        }
    }
    Ok(SnrTable {
        methods: methods.to_vec(),
        snr_db: snr_db.to_vec(),
        seeds: seeds.to_vec(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub method: Method,
    pub n_obs: usize,
    /// `None` for parametric methods.
    pub n_d: Option<usize>,
    pub mean_error: Option<f64>,
    pub log10_error: Option<f64>,
    pub rho: f64,
}

/// How sweeps that vary the atom count rebuild their dictionaries.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryPlan {
    pub training: Arc<Vec<Isrf>>,
    pub ksvd: KsvdParams,
}

impl DictionaryPlan {
    fn build(&self, method: DictionaryMethod, n_d: usize) -> Result<Dictionary> {
        let kind = match method {
            DictionaryMethod::Svd => DictionaryKind::Svd,
            DictionaryMethod::Ksvd => DictionaryKind::Ksvd(KsvdParams {
                k_sparse: self.ksvd.k_sparse.min(n_d),
                ..self.ksvd
            }),
        };
        dictionary::build(&self.training, n_d, kind)
    }
}

/// Mean error over an `N_obs × N_D` grid. Parametric methods are run once
/// per `N_obs`.
pub fn sweep_grid(
    data: &Dataset,
    methods: &[Method],
    n_obs_list: &[usize],
    n_d_list: &[usize],
    plan: &DictionaryPlan,
    cfg: &EstimateConfig,
) -> Result<Vec<GridCell>> {
    let mut cells = Vec::new();
    for &method in methods {
        let dicts: Vec<(Option<usize>, Dataset)> = match method.dictionary() {
            None => vec![(None, data.clone())],
            Some(kind) => n_d_list
                .iter()
                .map(|&n_d| Ok((Some(n_d), data.clone().with_dictionary(plan.build(kind, n_d)?)?)))
                .collect::<Result<_>>()?,
        };
        for &n_obs in n_obs_list {
            for (n_d, d) in &dicts {
                let r = estimate_all(method, d, &EstimateConfig { n_obs, ..*cfg })?;
                cells.push(GridCell {
                    method,
                    n_obs,
                    n_d: *n_d,
                    mean_error: r.mean_error,
                    log10_error: r.mean_error.map(f64::log10),
                    rho: r.rho,
                });
            }
        }
    }
    Ok(cells)
}

/// Measurements and truth of one scene seen by one field of view.
#[derive(Debug, Clone)]
pub struct SceneCase {
    pub scene: String,
    pub fov: usize,
    pub measurements: MeasurementSet,
    pub truth: Vec<Isrf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneRow {
    pub dictionary: String,
    pub scene: String,
    pub fov: usize,
    pub k: usize,
    pub mean_error: f64,
}

/// Runs a sparse method on each scene case with a dictionary built from the
/// uniform ISRFs only, then with one mixing in `scene_examples`.
pub struct SceneStudy<'a> {
    pub method: Method,
    pub uniform: &'a [Isrf],
    pub scene_examples: &'a [Isrf],
    pub uniform_stride: usize,
    pub n_d: usize,
    pub ks: &'a [usize],
    pub ksvd: KsvdParams,
}

pub fn scene_study(data: &Dataset, cases: &[SceneCase], study: &SceneStudy<'_>, cfg: &EstimateConfig) -> Result<Vec<SceneRow>> {
    let kind = match study.method.dictionary() {
        Some(DictionaryMethod::Svd) => DictionaryKind::Svd,
        Some(DictionaryMethod::Ksvd) => DictionaryKind::Ksvd(study.ksvd),
        None => return Err(Error::Config("scene study needs a sparse method".into())),
    };
    let uniform = dictionary::build_mixed(study.uniform, &[], study.uniform_stride, study.n_d, kind)?;
    let mixed = dictionary::build_mixed(study.uniform, study.scene_examples, study.uniform_stride, study.n_d, kind)?;
    let mut rows = Vec::new();
    for (label, dict) in [("uniform", uniform), ("mixed", mixed)] {
        let with_dict = data.clone().with_dictionary(dict)?;
        for case in cases {
            let d = with_dict.with_measurements(case.measurements.clone(), Some(case.truth.clone()))?;
            for &k in study.ks {
                let r = estimate_all(study.method, &d, &EstimateConfig { k, ..*cfg })?;
                rows.push(SceneRow {
                    dictionary: label.to_string(),
                    scene: case.scene.clone(),
                    fov: case.fov,
                    k,
                    mean_error: r.mean_error.expect("scene cases carry truth"),
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::convolve_with_rows;
    use crate::grid::normalize;
    use crate::synthetic::InstrumentSpec;

    fn isrf(v: Vec<f64>) -> Isrf {
        Isrf::new(v, 0.0).unwrap()
    }

    #[test]
    fn metric_e_cases() {
        let t = normalize(&isrf(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(metric_e(&t, t.values()).unwrap(), 0.0);
        let scaled: Vec<f64> = t.values().iter().map(|v| 1.01 * v).collect();
        assert!((metric_e(&t, &scaled).unwrap() - 0.01).abs() < 1e-15);
        let est = [0.2, 0.1, 0.5, 0.0];
        let direct = (0.1f64 - 0.2).abs() + (0.2f64 - 0.1).abs() + (0.3f64 - 0.5).abs() + 0.4;
        assert!((metric_e(&t, &est).unwrap() - direct).abs() < 1e-15);
        assert!(matches!(metric_e(&isrf(vec![0.0; 3]), &[0.0; 3]), Err(Error::ZeroIsrf)));
    }

    #[test]
    fn metric_rho_cases() {
        assert_eq!(metric_rho(&[0.0, 0.0]), 0.0);
        assert_eq!(metric_rho(&[2.5]), 2.5);
        assert!((metric_rho(&[1.0, 2.0, 6.0]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    fn small() -> (crate::synthetic::Instrument, Dataset) {
        let mut spec = InstrumentSpec::small(11);
        spec.n_centers = 48;
        spec.n_half = 24;
        spec.family.width_nm = 0.06;
        let inst = spec.build().unwrap();
        let truth = inst.truth().unwrap();
        let rows = ReferenceRows::new(&inst.reference, &inst.grid);
        let m = convolve_with_rows(&rows, &truth, &inst.grid).unwrap();
        let data = Dataset::new(inst.grid.clone(), inst.reference.clone(), m)
            .unwrap()
            .with_truth(truth)
            .unwrap();
        (inst, data)
    }

    #[test]
    fn delta_truth_with_delta_atom() {
        let (inst, _) = small();
        let n = inst.grid.n_samples();
        let mut delta = vec![0.0; n];
        delta[n / 2] = 1.0;
        let truth: Vec<Isrf> = inst.grid.centers().iter().map(|&c| Isrf::new(delta.clone(), c).unwrap()).collect();
        let rows = ReferenceRows::new(&inst.reference, &inst.grid);
        let m = convolve_with_rows(&rows, &truth, &inst.grid).unwrap();
        let mut atoms = DMatrix::zeros(n, 3);
        atoms[(n / 2, 0)] = 1.0;
        atoms[(0, 1)] = 1.0;
        atoms[(n - 1, 2)] = 1.0;
        let dict = Dictionary::from_atoms(atoms, DictionaryMethod::Svd).unwrap();
        let data = Dataset::new(inst.grid.clone(), inst.reference.clone(), m)
            .unwrap()
            .with_truth(truth)
            .unwrap()
            .with_dictionary(dict)
            .unwrap();
        let cfg = EstimateConfig { n_obs: 8, k: 1, ..Default::default() };
        let r = estimate_all(Method::OmpSvd, &data, &cfg).unwrap();
        assert!(r.mean_error.unwrap() < 1e-10);
    }

    #[test]
    fn sparse_method_without_dictionary_is_config_error() {
        let (_, data) = small();
        let r = estimate_all(Method::OmpKsvd, &data, &EstimateConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn gauss_on_gaussian_truth() {
        let mut spec = InstrumentSpec::small(12);
        spec.n_centers = 40;
        spec.n_half = 24;
        spec.family.shape = crate::synthetic::Shape::Gaussian;
        spec.family.width_nm = 0.08;
        let inst = spec.build().unwrap();
        let truth = inst.truth().unwrap();
        let m = crate::forward::convolve_forward(&inst.reference, &truth, &inst.grid).unwrap();
        let data = Dataset::new(inst.grid.clone(), inst.reference.clone(), m)
            .unwrap()
            .with_truth(truth)
            .unwrap();
        let cfg = EstimateConfig { n_obs: 20, pilot: PilotSource::Scan, ..Default::default() };
        let r = estimate_all(Method::Gauss, &data, &cfg).unwrap();
        assert!(r.mean_error.unwrap() < 0.005, "{:?}", r.mean_error);
    }

    #[test]
    fn aggregates_recompute_from_windows() {
        let (inst, data) = small();
        let dict = dictionary::build_svd(&inst.training(30).unwrap(), 8).unwrap();
        let data = data.with_dictionary(dict).unwrap();
        let cfg = EstimateConfig { n_obs: 12, k: 3, ..Default::default() };
        let r = estimate_all(Method::OmpSvd, &data, &cfg).unwrap();
        let e = r.errors();
        assert_eq!(e.len(), r.windows.len());
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        assert!((mean - r.mean_error.unwrap()).abs() < 1e-12);
        let rho = r.windows.iter().map(|w| w.residual_sq).sum::<f64>() / e.len() as f64;
        assert!((rho - r.rho).abs() < 1e-12);
        // residual of each window matches the explicit operator
        let w = &r.windows[3];
        let op = WindowedOperator::from_rows(&data.rows, w.index, 12).unwrap();
        let s = data.measurements.window(w.index, 12).unwrap();
        let direct = (s - op.apply(&w.estimate)).norm_squared();
        assert!((direct - w.residual_sq).abs() < 1e-12 * (1.0 + direct));
    }

    #[test]
    fn omp_residual_non_increasing_in_k() {
        let (inst, data) = small();
        let dict = dictionary::build_svd(&inst.training(30).unwrap(), 8).unwrap();
        let data = data.with_dictionary(dict).unwrap();
        let mut last: Option<Vec<f64>> = None;
        for k in 1..=5 {
            let r = estimate_all(Method::OmpSvd, &data, &EstimateConfig { n_obs: 12, k, ..Default::default() }).unwrap();
            let res: Vec<f64> = r.windows.iter().map(|w| w.residual_sq).collect();
            if let Some(prev) = &last {
                for (a, b) in res.iter().zip(prev) {
                    assert!(*a <= b * (1.0 + 1e-9) + 1e-24);
                }
            }
            last = Some(res);
        }
    }

    #[test]
    fn k_sweep_on_representable_truth() {
        let (inst, data) = small();
        let dict = dictionary::build_svd(&inst.training(30).unwrap(), 3).unwrap();
        let data = data.with_dictionary(dict).unwrap();
        let cfg = EstimateConfig { n_obs: 16, ..Default::default() };
        let sweep = sweep_k(&data, Method::OmpSvd, &[1, 2, 3], &cfg).unwrap();
        assert!(sweep.best_k.unwrap() <= 3);
        assert!(sweep.row(3).unwrap().mean_error < sweep.row(1).unwrap().mean_error);
        assert!(sweep_k(&data, Method::OmpSvd, &[0], &cfg).is_err());
    }

    #[test]
    fn snr_table_shape_and_infinite_column() {
        let (inst, data) = small();
        let dict = dictionary::build_svd(&inst.training(30).unwrap(), 8).unwrap();
        let data = data.with_dictionary(dict).unwrap();
        let cfg = EstimateConfig { n_obs: 12, k: 3, ..Default::default() };
        let snrs = [20.0, 55.0, f64::INFINITY];
        let t = sweep_snr(&data, &[Method::OmpSvd, Method::LassoSvd], &snrs, &[1, 2], &cfg).unwrap();
        assert_eq!(t.cells.len(), 6);
        let clean = estimate_all(Method::OmpSvd, &data, &cfg).unwrap();
        assert_eq!(t.cell(Method::OmpSvd, f64::INFINITY).unwrap().mean_error, clean.mean_error);
        let e20 = t.cell(Method::OmpSvd, 20.0).unwrap().mean_error.unwrap();
        let e55 = t.cell(Method::OmpSvd, 55.0).unwrap().mean_error.unwrap();
        assert!(e20 >= e55);
    }

    #[test]
    fn grid_sweep_shape() {
        let (inst, data) = small();
        let plan = DictionaryPlan {
            training: Arc::new(inst.training(30).unwrap()),
            ksvd: KsvdParams::new(3),
        };
        let cfg = EstimateConfig { k: 3, max_iter: 200, ..Default::default() };
        let cells = sweep_grid(&data, &[Method::OmpSvd, Method::Gauss], &[8, 16], &[4, 8], &plan, &cfg).unwrap();
        assert_eq!(cells.len(), 4 + 2);
        assert!(cells.iter().filter(|c| c.method == Method::Gauss).all(|c| c.n_d.is_none()));
        for c in &cells {
            assert_eq!(c.log10_error, c.mean_error.map(f64::log10));
        }
    }

    #[test]
    fn scene_verbatim_example_is_recovered() {
        let (inst, data) = small();
        let offsets = inst.grid.offsets();
        let distortion = crate::synthetic::SceneDistortion::series(3, 0.06)[2];
        let base = inst.truth().unwrap();
        // one scene whose ISRF is the same at every centre
        let scene_isrf = distortion.isrf(&offsets, &base[24]).unwrap();
        let truth: Vec<Isrf> = inst
            .grid
            .centers()
            .iter()
            .map(|&c| Isrf::new(scene_isrf.values().to_vec(), c).unwrap())
            .collect();
        let rows = ReferenceRows::new(&inst.reference, &inst.grid);
        let m = convolve_with_rows(&rows, &truth, &inst.grid).unwrap();
        let uniform = inst.training(40).unwrap();
        let examples = vec![scene_isrf.clone()];
        let study = SceneStudy {
            method: Method::OmpSvd,
            uniform: &uniform,
            scene_examples: &examples,
            uniform_stride: 1,
            n_d: 4,
            ks: &[4],
            ksvd: KsvdParams::new(3),
        };
        let cases = vec![SceneCase { scene: "s".into(), fov: 0, measurements: m, truth }];
        let cfg = EstimateConfig { n_obs: 16, ..Default::default() };
        let rows = scene_study(&data, &cases, &study, &cfg).unwrap();
        let uni = rows.iter().find(|r| r.dictionary == "uniform").unwrap().mean_error;
        let mixed = rows.iter().find(|r| r.dictionary == "mixed").unwrap().mean_error;
        assert!(mixed < 1e-6, "mixed {mixed}");
        assert!(uni >= mixed);

        let none: Vec<Isrf> = vec![];
        let study = SceneStudy { scene_examples: &none, ..study };
        let rows = scene_study(&data, &cases, &study, &cfg).unwrap();
        assert_eq!(rows[0].mean_error, rows[1].mean_error);
    }
}
