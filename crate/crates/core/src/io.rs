//! CSV and JSON file formats for templates, spectra, ISRF sets, measurements,
//! dictionaries and estimation results.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is lossless and outputs are byte-stable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, DictionaryMeta};
use crate::error::{Error, Result};
use crate::eval::EstimationResult;
use crate::forward::MeasurementSet;
use crate::grid::{Isrf, WavelengthGrid};
use crate::reference::ReferenceSpectrum;
use crate::templates::{IsrfTemplate, IsrfTemplateSet};

/// `foo.csv` → `foo.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// A data row with its 1-based line number in the file.
struct Row {
    line: usize,
    fields: Vec<String>,
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let found = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if found.len() < header.len() || header.iter().zip(found.iter()).any(|(a, b)| *a != b) {
        return Err(format_err(
            path,
            1,
            format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push(Row {
            line,
            fields: rec.iter().map(str::to_string).collect(),
        });
    }
    Ok(rows)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => format_err(path, line, format!("{kind:?}")),
    }
}

fn number(path: &Path, row: &Row, col: usize, name: &str) -> Result<f64> {
    let raw = row
        .fields
        .get(col)
        .ok_or_else(|| format_err(path, row.line, format!("missing column `{name}`")))?;
    let v: f64 = raw
        .parse()
        .map_err(|_| format_err(path, row.line, format!("`{raw}` is not a number ({name})")))?;
    if !v.is_finite() {
        return Err(format_err(path, row.line, format!("non-finite {name}")));
    }
    Ok(v)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes a value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.line(), e.to_string()))
}

/// Writes serializable rows as CSV with a header taken from the field names.
pub fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Centre, first data line, offsets and values of one ISRF.
type Block = (f64, usize, Vec<f64>, Vec<f64>);

/// Groups `center_nm,offset_nm,value` rows into (centre, first line, offsets,
/// values) blocks. A block ends when the centre changes or the offsets stop
/// increasing, so consecutive ISRFs may share a centre.
fn read_blocks(path: &Path) -> Result<Vec<Block>> {
    let rows = read_rows(path, &["center_nm", "offset_nm", "value"])?;
    let mut blocks: Vec<Block> = Vec::new();
    for row in &rows {
        let c = number(path, row, 0, "center_nm")?;
        let x = number(path, row, 1, "offset_nm")?;
        let v = number(path, row, 2, "value")?;
        match blocks.last_mut() {
            Some(b) if b.0 == c && b.2.last().is_some_and(|&p| x > p) => {
                b.2.push(x);
                b.3.push(v);
            }
            _ => blocks.push((c, row.line, vec![x], vec![v])),
        }
    }
    if blocks.is_empty() {
        return Err(format_err(path, 1, "no data rows"));
    }
    Ok(blocks)
}

/// Reads `center_nm,offset_nm,value` templates.
pub fn read_templates(path: &Path, instrument: &str) -> Result<IsrfTemplateSet> {
    let mut templates: Vec<IsrfTemplate> = Vec::new();
    for (c, line, x, v) in read_blocks(path)? {
        if templates.iter().any(|t| t.center == c) {
            return Err(format_err(path, line, format!("second template at centre {c} nm")));
        }
        let t = IsrfTemplate::new(c, x, v).map_err(|e| format_err(path, line, e.to_string()))?;
        templates.push(t);
    }
    IsrfTemplateSet::new(instrument, templates).map_err(|e| format_err(path, 1, e.to_string()))
}

pub fn write_templates(path: &Path, set: &IsrfTemplateSet) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "center_nm,offset_nm,value")?;
    for t in set.templates() {
        for (x, v) in t.offsets.iter().zip(&t.values) {
            writeln!(w, "{},{},{}", t.center, x, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes ISRF-like vectors sampled on `offsets` in the template layout.
pub fn write_isrf_values<'a>(
    path: &Path,
    offsets: &[f64],
    rows: impl IntoIterator<Item = (f64, &'a [f64])>,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "center_nm,offset_nm,value")?;
    for (c, values) in rows {
        for (x, v) in offsets.iter().zip(values) {
            writeln!(w, "{c},{x},{v}")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_isrfs(path: &Path, grid: &WavelengthGrid, isrfs: &[Isrf]) -> Result<()> {
    write_isrf_values(path, &grid.offsets(), isrfs.iter().map(|i| (i.center(), i.values())))
}

/// Writes ISRFs sampled on `offsets`, at any centres.
pub fn write_isrf_list(path: &Path, offsets: &[f64], isrfs: &[Isrf]) -> Result<()> {
    write_isrf_values(path, offsets, isrfs.iter().map(|i| (i.center(), i.values())))
}

/// Reads ISRFs sampled on `offsets`, at any centres.
pub fn read_isrf_list(path: &Path, offsets: &[f64]) -> Result<Vec<Isrf>> {
    let step = offsets.get(1).map_or(1.0, |b| b - offsets[0]);
    read_blocks(path)?
        .into_iter()
        .map(|(c, line, x, v)| {
            let tol = 1e-9 * step.abs();
            if x.len() != offsets.len() || x.iter().zip(offsets).any(|(a, b)| (a - b).abs() > tol) {
                return Err(format_err(path, line, format!("offsets of centre {c} nm do not match the grid")));
            }
            Isrf::new(v, c).map_err(|e| format_err(path, line, e.to_string()))
        })
        .collect()
}

/// Reads an ISRF set sampled on `grid`, one block per grid centre in order.
pub fn read_isrfs(path: &Path, grid: &WavelengthGrid) -> Result<Vec<Isrf>> {
    let isrfs = read_isrf_list(path, &grid.offsets())?;
    if isrfs.len() != grid.n_centers() {
        return Err(format_err(
            path,
            1,
            format!("{} ISRFs for {} grid centres", isrfs.len(), grid.n_centers()),
        ));
    }
    for (i, (isrf, &gc)) in isrfs.iter().zip(grid.centers()).enumerate() {
        if (isrf.center() - gc).abs() > 1e-9 * (1.0 + gc.abs()) {
            let line = 2 + i * grid.n_samples();
            return Err(format_err(path, line, format!("centre {} nm, expected {gc} nm", isrf.center())));
        }
    }
    Ok(isrfs)
}

pub fn read_reference(path: &Path) -> Result<ReferenceSpectrum> {
    let rows = read_rows(path, &["wavelength_nm", "radiance"])?;
    let mut x = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for row in &rows {
        let w = number(path, row, 0, "wavelength_nm")?;
        if x.last().is_some_and(|&p| w <= p) {
            return Err(format_err(path, row.line, "wavelengths not strictly increasing"));
        }
        x.push(w);
        y.push(number(path, row, 1, "radiance")?);
    }
    ReferenceSpectrum::new(&x, &y).map_err(|e| format_err(path, 1, e.to_string()))
}

pub fn write_reference(path: &Path, reference: &ReferenceSpectrum) -> Result<()> {
    let (x, y) = reference.knots();
    let mut w = create(path)?;
    writeln!(w, "wavelength_nm,radiance")?;
    for (a, b) in x.iter().zip(y) {
        writeln!(w, "{a},{b}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NoiseSidecar {
    snr_db: Option<f64>,
    sigma: f64,
    seed: Option<u64>,
    rng: Option<String>,
}

/// Writes `lambda_nm,value,valid` plus the noise sidecar next to it.
pub fn write_measurements(path: &Path, m: &MeasurementSet) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "lambda_nm,value,valid")?;
    for ((c, v), ok) in m.centers.iter().zip(&m.values).zip(&m.valid) {
        writeln!(w, "{c},{v},{}", u8::from(*ok))?;
    }
    w.flush()?;
    write_json(
        &sidecar_path(path),
        &NoiseSidecar {
            snr_db: m.snr_db,
            sigma: m.sigma,
            seed: m.seed,
            rng: m.rng.clone(),
        },
    )
}

/// Reads measurements; a missing sidecar means noise-free data.
pub fn read_measurements(path: &Path) -> Result<MeasurementSet> {
    let rows = read_rows(path, &["lambda_nm", "value", "valid"])?;
    let mut centers = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    let mut valid = Vec::with_capacity(rows.len());
    for row in &rows {
        centers.push(number(path, row, 0, "lambda_nm")?);
        let ok = match row.fields.get(2).map(String::as_str) {
            Some("1" | "true") => true,
            Some("0" | "false") => false,
            other => return Err(format_err(path, row.line, format!("valid must be 0/1, got {other:?}"))),
        };
        // Invalid pixels may carry any placeholder value.
        values.push(if ok { number(path, row, 1, "value")? } else { row.fields[1].parse().unwrap_or(0.0) });
        valid.push(ok);
    }
    let mut m = MeasurementSet::noise_free(centers, values, valid);
    let side = sidecar_path(path);
    if side.exists() {
        let s: NoiseSidecar = read_json(&side)?;
        m.snr_db = s.snr_db;
        m.sigma = s.sigma;
        m.seed = s.seed;
        m.rng = s.rng;
    }
    Ok(m)
}

/// Writes atoms as `offset_nm,atom_0,...` plus metadata in the sidecar.
pub fn write_dictionary(path: &Path, offsets: &[f64], dict: &Dictionary) -> Result<()> {
    let atoms = dict.atoms();
    if offsets.len() != atoms.nrows() {
        return Err(Error::InvalidArgument(format!(
            "{} offsets for {} atom samples",
            offsets.len(),
            atoms.nrows()
        )));
    }
    let mut w = create(path)?;
    write!(w, "offset_nm")?;
    for j in 0..atoms.ncols() {
        write!(w, ",atom_{j}")?;
    }
    writeln!(w)?;
    for (i, x) in offsets.iter().enumerate() {
        write!(w, "{x}")?;
        for j in 0..atoms.ncols() {
            write!(w, ",{}", atoms[(i, j)])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    write_json(&sidecar_path(path), dict.meta())
}

/// Reads a dictionary and its sidecar; returns the atoms' offsets too.
pub fn read_dictionary(path: &Path) -> Result<(Vec<f64>, Dictionary)> {
    let rows = read_rows(path, &["offset_nm"])?;
    let n_d = rows.first().map_or(0, |r| r.fields.len().saturating_sub(1));
    if n_d == 0 {
        return Err(format_err(path, 1, "dictionary has no atom columns"));
    }
    let mut offsets = Vec::with_capacity(rows.len());
    let mut atoms = DMatrix::zeros(rows.len(), n_d);
    for (i, row) in rows.iter().enumerate() {
        if row.fields.len() != n_d + 1 {
            return Err(format_err(path, row.line, format!("expected {} columns", n_d + 1)));
        }
        offsets.push(number(path, row, 0, "offset_nm")?);
        for j in 0..n_d {
            atoms[(i, j)] = number(path, row, j + 1, "atom")?;
        }
    }
    let meta: DictionaryMeta = read_json(&sidecar_path(path))?;
    let dict = Dictionary::with_meta(atoms, meta).map_err(|e| format_err(path, 1, e.to_string()))?;
    Ok((offsets, dict))
}

#[derive(Serialize)]
struct WindowRow {
    index: usize,
    center_nm: f64,
    error: Option<f64>,
    log10_error: Option<f64>,
    residual_sq: f64,
}

/// Per-window error table, plotted as wavelength against log10 error.
pub fn write_window_errors(path: &Path, result: &EstimationResult) -> Result<()> {
    let rows: Vec<WindowRow> = result
        .windows
        .iter()
        .map(|w| WindowRow {
            index: w.index,
            center_nm: w.center,
            error: w.error,
            log10_error: w.error.map(f64::log10),
            residual_sq: w.residual_sq,
        })
        .collect();
    write_table(path, &rows)
}

/// Writes `<stem>.csv` (estimated ISRFs), `<stem>_errors.csv` and
/// `<stem>.json` (full result with codes or fitted parameters).
pub fn write_result(dir: &Path, stem: &str, offsets: &[f64], result: &EstimationResult) -> Result<()> {
    write_isrf_values(
        &dir.join(format!("{stem}.csv")),
        offsets,
        result.windows.iter().map(|w| (w.center, w.estimate.as_slice())),
    )?;
    write_window_errors(&dir.join(format!("{stem}_errors.csv")), result)?;
    write_json(&dir.join(format!("{stem}.json")), result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::{build_svd, DictionaryMethod};
    use crate::forward::{add_noise, convolve_forward};
    use crate::synthetic::InstrumentSpec;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn small() -> crate::synthetic::Instrument {
        let mut spec = InstrumentSpec::small(3);
        spec.n_centers = 12;
        spec.n_half = 8;
        spec.build().unwrap()
    }

    #[test]
    fn templates_round_trip() {
        let d = tmp();
        let inst = small();
        let set = inst.templates(3, 2).unwrap();
        let p = d.path().join("t.csv");
        write_templates(&p, &set).unwrap();
        let back = read_templates(&p, set.instrument()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn reference_round_trip() {
        let d = tmp();
        let r = small().reference;
        let p = d.path().join("r.csv");
        write_reference(&p, &r).unwrap();
        let back = read_reference(&p).unwrap();
        assert_eq!(back.knots(), r.knots());
    }

    #[test]
    fn isrfs_round_trip_and_grid_check() {
        let d = tmp();
        let inst = small();
        let truth = inst.truth().unwrap();
        let p = d.path().join("i.csv");
        write_isrfs(&p, &inst.grid, &truth).unwrap();
        assert_eq!(read_isrfs(&p, &inst.grid).unwrap(), truth);
        let mut other = InstrumentSpec::small(3);
        other.n_centers = 11;
        other.n_half = 8;
        let g = other.build().unwrap().grid;
        assert!(matches!(read_isrfs(&p, &g), Err(Error::Format { .. })));
    }

    #[test]
    fn measurements_round_trip_with_sidecar() {
        let d = tmp();
        let inst = small();
        let m = convolve_forward(&inst.reference, &inst.truth().unwrap(), &inst.grid).unwrap();
        let noisy = add_noise(&m, 40.0, 9).unwrap();
        let p = d.path().join("m.csv");
        write_measurements(&p, &noisy).unwrap();
        assert_eq!(read_measurements(&p).unwrap(), noisy);
        let clean = add_noise(&m, f64::INFINITY, 9).unwrap();
        write_measurements(&p, &clean).unwrap();
        let side = std::fs::read_to_string(sidecar_path(&p)).unwrap();
        assert!(side.contains("\"snr_db\": null") && side.contains("\"sigma\": 0.0"));
        assert_eq!(read_measurements(&p).unwrap(), clean);
    }

    #[test]
    fn dictionary_round_trip() {
        let d = tmp();
        let inst = small();
        let dict = build_svd(&inst.training(10).unwrap(), 4).unwrap();
        let p = d.path().join("dict.csv");
        write_dictionary(&p, &inst.grid.offsets(), &dict).unwrap();
        let (offsets, back) = read_dictionary(&p).unwrap();
        assert_eq!(offsets, inst.grid.offsets());
        assert_eq!(back.atoms(), dict.atoms());
        assert_eq!(back.meta(), dict.meta());
        assert_eq!(back.method(), Some(DictionaryMethod::Svd));
    }

    #[test]
    fn format_errors_carry_line_numbers() {
        let d = tmp();
        let p = d.path().join("bad.csv");
        std::fs::write(&p, "wavelength_nm,radiance\n1,2\n2,3\n3,x\n4,5\n").unwrap();
        match read_reference(&p) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "wavelength_nm,radiance\n1,2\n2,3\n2,4\n4,5\n").unwrap();
        assert!(matches!(read_reference(&p), Err(Error::Format { line: 4, .. })));
        std::fs::write(&p, "lambda,radiance\n1,2\n").unwrap();
        assert!(matches!(read_reference(&p), Err(Error::Format { line: 1, .. })));
        std::fs::write(&p, "center_nm,offset_nm,value\n1,0,1\n1,1,1\n2,0,1\n2,1,1\n1,2,1\n").unwrap();
        assert!(matches!(read_templates(&p, "x"), Err(Error::Format { line: 6, .. })));
        std::fs::write(&p, "center_nm,offset_nm,value\n1,0,1\n1,1,1\n1,0,2\n1,1,2\n").unwrap();
        let list = read_isrf_list(&p, &[0.0, 1.0]).unwrap();
        assert_eq!(list.len(), 2);
        assert_eq!(list[1].values(), &[2.0, 2.0]);
        std::fs::write(&p, "lambda_nm,value,valid\n1,2,1\n2,3,yes\n").unwrap();
        assert!(matches!(read_measurements(&p), Err(Error::Format { line: 3, .. })));
    }
}
