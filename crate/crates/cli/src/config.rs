use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spirit_core::dictionary::KsvdParams;
use spirit_core::eval::{EstimateConfig, Method, PilotSource, DEFAULT_SNR_DB};
use spirit_core::WavelengthGrid;

/// Invalid or missing configuration. Maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("configuration error: {0}")]
pub struct ConfigError(pub String);

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub delta: f64,
    pub n_half: usize,
    pub start_nm: f64,
    pub step_nm: f64,
    pub count: usize,
}

impl GridConfig {
    pub fn build(&self) -> anyhow::Result<WavelengthGrid> {
        WavelengthGrid::regular(self.delta, self.n_half, self.start_nm, self.step_nm, self.count)
            .map_err(|e| config_err(format!("grid: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub name: String,
    /// Field-of-view index the scene is labelled with.
    #[serde(default)]
    pub fov: usize,
    /// Scene ISRF templates.
    pub templates: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Truth ISRF templates interpolated onto the grid.
    pub templates: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    /// Training ISRFs on the grid offsets, for dictionary building.
    pub training: Option<PathBuf>,
    /// Scene ISRFs; the scene sweep compares dictionaries with and without
    /// them.
    pub scene_examples: Option<PathBuf>,
    /// Also mix the scene examples into the dictionaries of `dict`,
    /// `estimate` and the K / SNR sweeps.
    #[serde(default)]
    pub mix_scene_examples: bool,
    /// Measured spectrum; synthesized from `templates` when absent.
    pub measurements: Option<PathBuf>,
    /// Truth ISRFs on the grid; interpolated from `templates` when absent.
    pub truth: Option<PathBuf>,
    pub pilots: Option<PathBuf>,
    pub dictionary_svd: Option<PathBuf>,
    pub dictionary_ksvd: Option<PathBuf>,
    #[serde(default)]
    pub scenes: Vec<SceneConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    pub methods: Vec<Method>,
    pub k: usize,
    pub n_obs: usize,
    pub n_d: usize,
    pub lasso_gamma: Option<f64>,
    pub pilot: PilotSource,
    pub max_iter: usize,
    pub diameter_tol: f64,
    /// Noise level of synthesized measurements.
    #[serde(with = "snr_one")]
    pub snr_db: Snr,
}

impl Default for EstimateSection {
    fn default() -> Self {
        let e = EstimateConfig::default();
        Self {
            methods: vec![Method::OmpSvd],
            k: e.k,
            n_obs: e.n_obs,
            n_d: 25,
            lasso_gamma: e.lasso_gamma,
            pilot: e.pilot,
            max_iter: e.max_iter,
            diameter_tol: e.diameter_tol,
            snr_db: None,
        }
    }
}

impl EstimateSection {
    pub fn config(&self) -> EstimateConfig {
        EstimateConfig {
            n_obs: self.n_obs,
            k: self.k,
            lasso_gamma: self.lasso_gamma,
            pilot: self.pilot,
            max_iter: self.max_iter,
            diameter_tol: self.diameter_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KsvdSection {
    pub k_sparse: usize,
    pub iters: usize,
    pub rel_tol: Option<f64>,
}

impl Default for KsvdSection {
    fn default() -> Self {
        let p = KsvdParams::new(3);
        Self {
            k_sparse: p.k_sparse,
            iters: p.iters,
            rel_tol: p.rel_tol,
        }
    }
}

impl KsvdSection {
    pub fn params(&self) -> KsvdParams {
        KsvdParams {
            k_sparse: self.k_sparse,
            iters: self.iters,
            rel_tol: self.rel_tol,
        }
    }
}

/// SNR in dB; `None` is noise-free (written `"inf"` in config files).
pub type Snr = Option<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub ks: Vec<usize>,
    #[serde(with = "snr_list")]
    pub snr_db: Vec<Snr>,
    pub replicates: usize,
    pub n_obs_list: Vec<usize>,
    pub n_d_list: Vec<usize>,
    pub uniform_stride: usize,
    #[serde(with = "snr_one")]
    pub scene_snr_db: Snr,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            ks: (1..=10).collect(),
            snr_db: DEFAULT_SNR_DB.iter().map(|&v| Some(v)).collect(),
            replicates: 5,
            n_obs_list: vec![20, 40, 60, 80],
            n_d_list: vec![5, 10, 15, 20, 25],
            uniform_stride: 1,
            scene_snr_db: Some(120.0),
        }
    }
}

pub fn parse_snr(s: &str) -> Result<Snr, String> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("+inf") {
        return Ok(None);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(v) if v == f64::INFINITY => Ok(None),
        _ => Err(format!("invalid SNR `{s}` (dB number or `inf`)")),
    }
}

pub fn snr_value(s: Snr) -> f64 {
    s.unwrap_or(f64::INFINITY)
}

pub fn snr_label(s: Snr) -> String {
    s.map_or_else(|| "inf".to_string(), |v| v.to_string())
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SnrRepr {
    Num(f64),
    Text(String),
}

impl SnrRepr {
    fn of(s: Snr) -> Self {
        s.map_or_else(|| SnrRepr::Text("inf".into()), SnrRepr::Num)
    }

    fn parse<E: serde::de::Error>(self) -> Result<Snr, E> {
        match self {
            SnrRepr::Num(v) if v.is_finite() => Ok(Some(v)),
            SnrRepr::Num(_) => Ok(None),
            SnrRepr::Text(t) => parse_snr(&t).map_err(E::custom),
        }
    }
}

mod snr_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Snr], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&x| SnrRepr::of(x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Snr>, D::Error> {
        Vec::<SnrRepr>::deserialize(d)?.into_iter().map(SnrRepr::parse).collect()
    }
}

mod snr_one {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Snr, s: S) -> Result<S::Ok, S::Error> {
        SnrRepr::of(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Snr, D::Error> {
        SnrRepr::deserialize(d)?.parse()
    }
}

/// Everything a run needs. Serialized verbatim into the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_instrument")]
    pub instrument: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub grid: GridConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub ksvd: KsvdSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

fn default_instrument() -> String {
    "instrument".into()
}

fn default_seed() -> u64 {
    1
}

fn default_out() -> PathBuf {
    "out".into()
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub methods: Vec<Method>,
    pub snr_db: Option<Vec<Snr>>,
    pub k: Option<usize>,
    pub n_obs: Option<usize>,
    pub n_d: Option<usize>,
}

impl RunConfig {
    /// Parses TOML or JSON (by extension) and resolves relative paths against
    /// the config file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?,
        };
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        let d = &mut self.data;
        for p in [
            &mut d.templates,
            &mut d.reference,
            &mut d.training,
            &mut d.scene_examples,
            &mut d.measurements,
            &mut d.truth,
            &mut d.pilots,
            &mut d.dictionary_svd,
            &mut d.dictionary_ksvd,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for s in &mut d.scenes {
            fix(&mut s.templates);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if !o.methods.is_empty() {
            self.estimate.methods = o.methods.clone();
        }
        if let Some(snr) = &o.snr_db {
            self.sweep.snr_db = snr.clone();
            if let Some(&first) = snr.first() {
                self.estimate.snr_db = first;
            }
        }
        if let Some(k) = o.k {
            self.estimate.k = k;
        }
        if let Some(n) = o.n_obs {
            self.estimate.n_obs = n;
        }
        if let Some(n) = o.n_d {
            self.estimate.n_d = n;
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.grid.build()?;
        let e = &self.estimate;
        if e.methods.is_empty() {
            return Err(config_err("method list is empty"));
        }
        for (name, v) in [("k", e.k), ("n_obs", e.n_obs), ("n_d", e.n_d), ("max_iter", e.max_iter)] {
            if v == 0 {
                return Err(config_err(format!("estimate.{name} must be positive")));
            }
        }
        if e.k > e.n_d && e.methods.iter().any(|m| m.is_sparse()) {
            return Err(config_err(format!("k = {} exceeds n_d = {}", e.k, e.n_d)));
        }
        if e.lasso_gamma.is_some_and(|g| !(g > 0.0)) {
            return Err(config_err("estimate.lasso_gamma must be positive"));
        }
        if self.ksvd.k_sparse == 0 || self.ksvd.iters == 0 {
            return Err(config_err("ksvd.k_sparse and ksvd.iters must be positive"));
        }
        let s = &self.sweep;
        if s.replicates == 0 || s.uniform_stride == 0 {
            return Err(config_err("sweep.replicates and sweep.uniform_stride must be positive"));
        }
        if [&s.ks, &s.n_obs_list, &s.n_d_list].iter().any(|l| l.contains(&0)) {
            return Err(config_err("sweep lists must hold positive sizes"));
        }
        let d = &self.data;
        for p in [
            &d.templates,
            &d.reference,
            &d.training,
            &d.scene_examples,
            &d.measurements,
            &d.truth,
            &d.pilots,
            &d.dictionary_svd,
            &d.dictionary_ksvd,
        ]
        .into_iter()
        .flatten()
        .chain(d.scenes.iter().map(|s| &s.templates))
        {
            if !p.exists() {
                return Err(config_err(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn estimate_config(&self) -> EstimateConfig {
        self.estimate.config()
    }
}

/// Parses a comma-separated SNR list such as `20,55,inf`.
pub fn parse_snr_list(s: &str) -> Result<Vec<Snr>, String> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(parse_snr).collect()
}
