//! Loading configured inputs into core types.

use std::path::Path;

use anyhow::Context;
use log::{info, warn};
use spirit_core::dictionary::{self, Dictionary, DictionaryKind, DictionaryMethod};
use spirit_core::eval::Dataset;
use spirit_core::forward::{add_noise, convolve_with_rows, MeasurementSet, ReferenceRows};
use spirit_core::{interpolate_isrf_set, io, Isrf, ReferenceSpectrum, WavelengthGrid};

use crate::config::{config_err, snr_value, RunConfig, Snr};

pub fn reference(cfg: &RunConfig) -> anyhow::Result<ReferenceSpectrum> {
    let path = cfg.data.reference.as_ref().ok_or_else(|| config_err("data.reference is required"))?;
    Ok(io::read_reference(path)?)
}

/// ISRFs on the grid interpolated from a template file.
pub fn isrfs_from_templates(cfg: &RunConfig, path: &Path, grid: &WavelengthGrid) -> anyhow::Result<Vec<Isrf>> {
    let set = io::read_templates(path, &cfg.instrument)?;
    let dense = interpolate_isrf_set(&set, grid).with_context(|| format!("interpolating {}", path.display()))?;
    if dense.clamped > 0 {
        warn!("{}: {} negative interpolated samples clamped to zero", path.display(), dense.clamped);
    }
    Ok(dense.isrfs)
}

/// Truth from `data.truth`, else interpolated from `data.templates`.
pub fn truth(cfg: &RunConfig, grid: &WavelengthGrid) -> anyhow::Result<Option<Vec<Isrf>>> {
    if let Some(p) = &cfg.data.truth {
        return Ok(Some(io::read_isrfs(p, grid)?));
    }
    match &cfg.data.templates {
        Some(p) => Ok(Some(isrfs_from_templates(cfg, p, grid)?)),
        None => Ok(None),
    }
}

pub fn training(cfg: &RunConfig, grid: &WavelengthGrid) -> anyhow::Result<Vec<Isrf>> {
    let path = cfg
        .data
        .training
        .as_ref()
        .ok_or_else(|| config_err("data.training is required to build dictionaries"))?;
    Ok(io::read_isrf_list(path, &grid.offsets())?)
}

pub fn scene_examples(cfg: &RunConfig, grid: &WavelengthGrid) -> anyhow::Result<Vec<Isrf>> {
    match &cfg.data.scene_examples {
        Some(p) => Ok(io::read_isrf_list(p, &grid.offsets())?),
        None => Ok(Vec::new()),
    }
}

/// Noise-free measurements of `truth`, optionally with noise added.
pub fn synthesize(rows: &ReferenceRows, truth: &[Isrf], grid: &WavelengthGrid, snr: Snr, seed: u64) -> anyhow::Result<MeasurementSet> {
    let clean = convolve_with_rows(rows, truth, grid)?;
    Ok(match snr {
        Some(_) => add_noise(&clean, snr_value(snr), seed)?,
        None => clean,
    })
}

/// Measurements from `data.measurements`, else synthesized from the truth at
/// `snr`.
pub fn measurements(
    cfg: &RunConfig,
    grid: &WavelengthGrid,
    rows: &ReferenceRows,
    truth: Option<&[Isrf]>,
    snr: Snr,
) -> anyhow::Result<MeasurementSet> {
    if let Some(p) = &cfg.data.measurements {
        let m = io::read_measurements(p)?;
        let matches = m.centers.len() == grid.n_centers()
            && m.centers.iter().zip(grid.centers()).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        if !matches {
            return Err(config_err(format!("{}: measurement wavelengths do not match the grid centres", p.display())));
        }
        return Ok(m);
    }
    let truth = truth.ok_or_else(|| config_err("need data.measurements, or data.templates / data.truth to synthesize them"))?;
    synthesize(rows, truth, grid, snr, cfg.seed)
}

/// Builds or loads the dictionary of `method`. Mixed with the scene examples
/// when `data.mix_scene_examples` is set.
pub fn dictionary(cfg: &RunConfig, grid: &WavelengthGrid, method: DictionaryMethod) -> anyhow::Result<Dictionary> {
    let path = match method {
        DictionaryMethod::Svd => &cfg.data.dictionary_svd,
        DictionaryMethod::Ksvd => &cfg.data.dictionary_ksvd,
    };
    if let Some(p) = path {
        let (offsets, dict) = io::read_dictionary(p)?;
        let expected = grid.offsets();
        if offsets.len() != expected.len() || offsets.iter().zip(&expected).any(|(a, b)| (a - b).abs() > 1e-9 * grid.delta()) {
            return Err(config_err(format!("{}: dictionary offsets do not match the grid", p.display())));
        }
        return Ok(dict);
    }
    if cfg.data.training.is_none() {
        return Err(config_err(format!(
            "no {} dictionary: set data.dictionary_{} or data.training",
            method.as_str(),
            method.as_str()
        )));
    }
    let training = training(cfg, grid)?;
    let examples = if cfg.data.mix_scene_examples {
        scene_examples(cfg, grid)?
    } else {
        Vec::new()
    };
    let kind = match method {
        DictionaryMethod::Svd => DictionaryKind::Svd,
        DictionaryMethod::Ksvd => DictionaryKind::Ksvd(cfg.ksvd.params()),
    };
    info!("building {} dictionary, N_D = {}", method.as_str(), cfg.estimate.n_d);
    let dict = if examples.is_empty() {
        dictionary::build(&training, cfg.estimate.n_d, kind)?
    } else {
        dictionary::build_mixed(&training, &examples, cfg.sweep.uniform_stride, cfg.estimate.n_d, kind)?
    };
    Ok(dict)
}

/// Everything estimation needs: grid, reference rows, measurements, truth,
/// pilots and the dictionaries of the configured sparse methods.
pub fn dataset(cfg: &RunConfig, snr: Snr, with_dictionaries: bool) -> anyhow::Result<Dataset> {
    let grid = cfg.grid.build()?;
    let reference = reference(cfg)?;
    let truth = truth(cfg, &grid)?;
    let rows = ReferenceRows::new(&reference, &grid);
    let m = measurements(cfg, &grid, &rows, truth.as_deref(), snr)?;
    let mut data = Dataset::new(grid.clone(), reference, m)?;
    if let Some(t) = truth {
        data = data.with_truth(t)?;
    }
    if let Some(p) = &cfg.data.pilots {
        data = data.with_pilots(io::read_isrfs(p, &grid)?)?;
    }
    if with_dictionaries {
        let mut kinds: Vec<DictionaryMethod> = cfg.estimate.methods.iter().filter_map(|m| m.dictionary()).collect();
        kinds.sort_by_key(|k| k.as_str());
        kinds.dedup();
        for kind in kinds {
            data = data.with_dictionary(dictionary(cfg, &grid, kind)?)?;
        }
    }
    Ok(data)
}
