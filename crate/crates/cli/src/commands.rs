use std::sync::Arc;

use serde::{Deserialize, Serialize};
use spirit_core::dictionary::DictionaryMethod;
use spirit_core::eval::{self, DictionaryPlan, Method, SceneCase, SceneStudy};
use spirit_core::forward::{add_noise, ReferenceRows};
use spirit_core::io;

use crate::config::{config_err, snr_label, snr_value, RunConfig, Snr};
use crate::manifest::{CellLog, Run};
use crate::pipeline;

pub fn synth(cfg: &RunConfig, jobs: usize) -> anyhow::Result<()> {
    let mut run = Run::new(cfg, "synth", jobs);
    let grid = cfg.grid.build()?;
    let reference = pipeline::reference(cfg)?;
    let templates = cfg
        .data
        .templates
        .as_ref()
        .ok_or_else(|| config_err("synth needs data.templates"))?;
    let truth = pipeline::isrfs_from_templates(cfg, templates, &grid)?;
    io::write_isrfs(&run.output("truth.csv"), &grid, &truth)?;
    let rows = ReferenceRows::new(&reference, &grid);
    let clean = pipeline::synthesize(&rows, &truth, &grid, None, cfg.seed)?;
    io::write_measurements(&run.output("measurements_clean.csv"), &clean)?;
    for &snr in &cfg.sweep.snr_db {
        let noisy = add_noise(&clean, snr_value(snr), cfg.seed)?;
        io::write_measurements(&run.output(&format!("measurements_snr{}.csv", snr_label(snr))), &noisy)?;
    }
    let invalid = clean.valid.iter().filter(|v| !**v).count();
    say!("synthesized {} pixels ({invalid} outside the reference domain)", clean.len());
    run.finish()?;
    Ok(())
}

fn dictionary_kinds(cfg: &RunConfig) -> Vec<DictionaryMethod> {
    let mut kinds: Vec<DictionaryMethod> = cfg.estimate.methods.iter().filter_map(|m| m.dictionary()).collect();
    if kinds.is_empty() {
        kinds = vec![DictionaryMethod::Svd, DictionaryMethod::Ksvd];
    }
    kinds.sort_by_key(|k| k.as_str());
    kinds.dedup();
    kinds
}

pub fn dict(cfg: &RunConfig, jobs: usize) -> anyhow::Result<()> {
    let mut run = Run::new(cfg, "dict", jobs);
    let grid = cfg.grid.build()?;
    for kind in dictionary_kinds(cfg) {
        let d = pipeline::dictionary(cfg, &grid, kind)?;
        let name = format!("dictionary_{}.csv", kind.as_str());
        io::write_dictionary(&run.output(&name), &grid.offsets(), &d)?;
        let meta = d.meta();
        say!("{name}: N_D = {}, training = {} ({})", meta.n_d, meta.training_count, meta.sources.join(", "));
        let total: f64 = meta.singular_values.iter().map(|s| s * s).sum();
        let mut cumulative = 0.0;
        for (i, s) in meta.singular_values.iter().enumerate() {
            cumulative += s * s;
            say!("  sigma[{i:>3}] = {s:.6e}  cumulative energy {:.10}", cumulative / total);
        }
        if let Some(last) = meta.objective.last() {
            say!("  K-SVD objective after {} iterations: {last:.6e}", meta.objective.len());
        }
    }
    run.finish()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryRow {
    method: Method,
    windows: usize,
    mean_error: Option<f64>,
    rho: f64,
}

pub fn estimate(cfg: &RunConfig, jobs: usize) -> anyhow::Result<()> {
    let mut run = Run::new(cfg, "estimate", jobs);
    let data = pipeline::dataset(cfg, cfg.estimate.snr_db, true)?;
    let ecfg = cfg.estimate_config();
    let offsets = data.grid.offsets();
    let mut summary = Vec::new();
    for &method in &cfg.estimate.methods {
        let start = std::time::Instant::now();
        let r = eval::estimate_all(method, &data, &ecfg)?;
        run.timings.cells.insert(method.name().to_string(), start.elapsed().as_secs_f64());
        let stem = format!("result_{}", method.name());
        for suffix in [".csv", "_errors.csv", ".json"] {
            run.output(&format!("{stem}{suffix}"));
        }
        io::write_result(&cfg.out, &stem, &offsets, &r)?;
        match r.mean_error {
            Some(e) => say!("{method:<11} windows {:>5}  mean E {e:.4e}  rho {:.4e}", r.windows.len(), r.rho),
            None => say!("{method:<11} windows {:>5}  rho {:.4e} (no truth)", r.windows.len(), r.rho),
        }
        summary.push(SummaryRow {
            method,
            windows: r.windows.len(),
            mean_error: r.mean_error,
            rho: r.rho,
        });
    }
    io::write_table(&run.output("summary.csv"), &summary)?;
    run.finish()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    K,
    Snr,
    Grid,
    Scene,
}

impl SweepKind {
    fn name(self) -> &'static str {
        match self {
            SweepKind::K => "k",
            SweepKind::Snr => "snr",
            SweepKind::Grid => "grid",
            SweepKind::Scene => "scene",
        }
    }
}

pub fn sweep(cfg: &RunConfig, kind: SweepKind, resume: bool, jobs: usize) -> anyhow::Result<()> {
    let mut run = Run::new(cfg, &format!("sweep {}", kind.name()), jobs);
    let log_path = run.path(&format!("sweep_{}.cells.jsonl", kind.name()));
    let mut log = CellLog::open(&log_path, cfg, resume)?;
    match kind {
        SweepKind::K => sweep_k(cfg, &mut run, &mut log)?,
        SweepKind::Snr => sweep_snr(cfg, &mut run, &mut log)?,
        SweepKind::Grid => sweep_grid(cfg, &mut run, &mut log)?,
        SweepKind::Scene => sweep_scene(cfg, &mut run, &mut log)?,
    }
    run.finish()?;
    Ok(())
}

fn sparse_methods(cfg: &RunConfig, sweep: &str) -> anyhow::Result<Vec<Method>> {
    let methods: Vec<Method> = cfg.estimate.methods.iter().copied().filter(|m| m.is_sparse()).collect();
    if methods.is_empty() {
        return Err(config_err(format!("the {sweep} sweep needs at least one sparse method")));
    }
    Ok(methods)
}

#[derive(Debug, Serialize, Deserialize)]
struct KCell {
    method: Method,
    k: usize,
    mean_error: Option<f64>,
    rho: f64,
}

#[derive(Serialize)]
struct KBest {
    method: Method,
    best_k: Option<usize>,
    mean_error: Option<f64>,
}

fn sweep_k(cfg: &RunConfig, run: &mut Run<'_>, log: &mut CellLog) -> anyhow::Result<()> {
    let methods = sparse_methods(cfg, "K")?;
    let data = pipeline::dataset(cfg, cfg.estimate.snr_db, true)?;
    if data.truth.is_none() {
        return Err(config_err("the K sweep needs truth ISRFs"));
    }
    let ecfg = cfg.estimate_config();
    let mut cells = Vec::new();
    let mut best = Vec::new();
    for method in methods {
        let mut rows: Vec<KCell> = Vec::new();
        for &k in cfg.sweep.ks.iter().filter(|&&k| k <= cfg.estimate.n_d) {
            let key = format!("{method}/k={k}");
            rows.push(log.cell(&key, &mut run.timings, || {
                let s = eval::sweep_k(&data, method, &[k], &ecfg)?;
                let r = &s.rows[0];
                Ok(KCell {
                    method,
                    k,
                    mean_error: r.mean_error,
                    rho: r.rho,
                })
            })?);
        }
        let b = rows
            .iter()
            .filter_map(|r| r.mean_error.map(|e| (r.k, e)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        best.push(KBest {
            method,
            best_k: b.map(|x| x.0),
            mean_error: b.map(|x| x.1),
        });
        cells.extend(rows);
    }
    io::write_table(&run.output("sweep_k.csv"), &cells)?;
    io::write_table(&run.output("sweep_k_best.csv"), &best)?;
    for b in &best {
        if let (Some(k), Some(e)) = (b.best_k, b.mean_error) {
            say!("{:<11} best K = {k}  mean E {e:.4e}", b.method);
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SnrRow {
    method: Method,
    snr_db: String,
    mean_error: Option<f64>,
    rho: f64,
    replicates: usize,
    below_one_percent: Option<bool>,
}

fn sweep_snr(cfg: &RunConfig, run: &mut Run<'_>, log: &mut CellLog) -> anyhow::Result<()> {
    let data = pipeline::dataset(cfg, None, true)?;
    if data.measurements.sigma != 0.0 {
        return Err(config_err("the SNR sweep adds noise itself and needs noise-free measurements"));
    }
    if data.truth.is_none() {
        return Err(config_err("the SNR sweep needs truth ISRFs"));
    }
    let seeds = eval::replicate_seeds(cfg.seed, cfg.sweep.replicates);
    run.seeds = seeds.clone();
    let ecfg = cfg.estimate_config();
    let mut rows = Vec::new();
    for &method in &cfg.estimate.methods {
        for &snr in &cfg.sweep.snr_db {
            let key = format!("{method}/snr={}", snr_label(snr));
            rows.push(log.cell(&key, &mut run.timings, || {
                let t = eval::sweep_snr(&data, &[method], &[snr_value(snr)], &seeds, &ecfg)?;
                let c = &t.cells[0];
                Ok(SnrRow {
                    method,
                    snr_db: snr_label(snr),
                    mean_error: c.mean_error,
                    rho: c.rho,
                    replicates: c.replicates,
                    below_one_percent: c.below_one_percent,
                })
            })?);
        }
    }
    io::write_table(&run.output("sweep_snr.csv"), &rows)?;
    print_snr_table(cfg, &rows);
    Ok(())
}

fn print_snr_table(cfg: &RunConfig, rows: &[SnrRow]) {
    let mut header = format!("{:<11}", "method");
    for &s in &cfg.sweep.snr_db {
        header += &format!(" {:>12}", format!("{} dB", snr_label(s)));
    }
    say!("{header}");
    for &m in &cfg.estimate.methods {
        let mut line = format!("{m:<11}");
        for r in rows.iter().filter(|r| r.method == m) {
            let cell = r.mean_error.map_or("-".to_string(), |e| format!("{:.3}%", 100.0 * e));
            line += &format!(" {cell:>12}");
        }
        say!("{line}");
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GridRow {
    method: Method,
    n_obs: usize,
    n_d: Option<usize>,
    mean_error: Option<f64>,
    log10_error: Option<f64>,
    rho: f64,
}

fn sweep_grid(cfg: &RunConfig, run: &mut Run<'_>, log: &mut CellLog) -> anyhow::Result<()> {
    let data = pipeline::dataset(cfg, cfg.estimate.snr_db, false)?;
    if data.truth.is_none() {
        return Err(config_err("the grid sweep needs truth ISRFs"));
    }
    let needs_training = cfg.estimate.methods.iter().any(|m| m.is_sparse());
    let training = if needs_training {
        pipeline::training(cfg, &data.grid)?
    } else {
        Vec::new()
    };
    let plan = DictionaryPlan {
        training: Arc::new(training),
        ksvd: cfg.ksvd.params(),
    };
    let ecfg = cfg.estimate_config();
    let mut rows = Vec::new();
    for &method in &cfg.estimate.methods {
        let n_ds: Vec<Option<usize>> = if method.is_sparse() {
            cfg.sweep.n_d_list.iter().map(|&n| Some(n)).collect()
        } else {
            vec![None]
        };
        for &n_obs in &cfg.sweep.n_obs_list {
            for &n_d in &n_ds {
                let key = match n_d {
                    Some(n) => format!("{method}/n_obs={n_obs}/n_d={n}"),
                    None => format!("{method}/n_obs={n_obs}"),
                };
                rows.push(log.cell(&key, &mut run.timings, || {
                    let list: Vec<usize> = n_d.into_iter().collect();
                    let c = eval::sweep_grid(&data, &[method], &[n_obs], &list, &plan, &ecfg)?.remove(0);
                    Ok(GridRow {
                        method,
                        n_obs,
                        n_d: c.n_d,
                        mean_error: c.mean_error,
                        log10_error: c.log10_error,
                        rho: c.rho,
                    })
                })?);
            }
        }
    }
    io::write_table(&run.output("sweep_grid.csv"), &rows)?;
    say!("{} grid cells written", rows.len());
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneOut {
    method: Method,
    dictionary: String,
    scene: String,
    fov: usize,
    k: usize,
    mean_error: f64,
}

fn sweep_scene(cfg: &RunConfig, run: &mut Run<'_>, log: &mut CellLog) -> anyhow::Result<()> {
    let methods = sparse_methods(cfg, "scene")?;
    if cfg.data.scenes.is_empty() {
        return Err(config_err("the scene sweep needs data.scenes"));
    }
    let grid = cfg.grid.build()?;
    let reference = pipeline::reference(cfg)?;
    let rows = ReferenceRows::new(&reference, &grid);
    let uniform = pipeline::training(cfg, &grid)?;
    let examples = pipeline::scene_examples(cfg, &grid)?;
    if examples.is_empty() {
        log::warn!("no scene examples: the mixed dictionary equals the uniform one");
    }
    let scene_snr: Snr = cfg.sweep.scene_snr_db;
    let cases = cfg
        .data
        .scenes
        .iter()
        .map(|s| {
            let truth = pipeline::isrfs_from_templates(cfg, &s.templates, &grid)?;
            let measurements = pipeline::synthesize(&rows, &truth, &grid, scene_snr, cfg.seed)?;
            Ok(SceneCase {
                scene: s.name.clone(),
                fov: s.fov,
                measurements,
                truth,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let base = eval::Dataset::new(grid.clone(), reference, cases[0].measurements.clone())?;
    let ks: Vec<usize> = cfg.sweep.ks.iter().copied().filter(|&k| k <= cfg.estimate.n_d).collect();
    let ecfg = cfg.estimate_config();
    let mut out = Vec::new();
    for method in methods {
        let study = SceneStudy {
            method,
            uniform: &uniform,
            scene_examples: &examples,
            uniform_stride: cfg.sweep.uniform_stride,
            n_d: cfg.estimate.n_d,
            ks: &ks,
            ksvd: cfg.ksvd.params(),
        };
        for case in &cases {
            let key = format!("{method}/scene={}/fov={}", case.scene, case.fov);
            let cell: Vec<SceneOut> = log.cell(&key, &mut run.timings, || {
                Ok(eval::scene_study(&base, std::slice::from_ref(case), &study, &ecfg)?
                    .into_iter()
                    .map(|r| SceneOut {
                        method,
                        dictionary: r.dictionary,
                        scene: r.scene,
                        fov: r.fov,
                        k: r.k,
                        mean_error: r.mean_error,
                    })
                    .collect())
            })?;
            out.extend(cell);
        }
    }
    // Uniform rows first, then mixed, each in scene order.
    out.sort_by_key(|r| (r.method, r.dictionary != "uniform"));
    io::write_table(&run.output("sweep_scene.csv"), &out)?;
    for r in out.iter().filter(|r| r.k == ks.iter().copied().max().unwrap_or(0)) {
        say!("{:<11} {:<8} {:<12} fov {} K {}  mean E {:.4e}", r.method, r.dictionary, r.scene, r.fov, r.k, r.mean_error);
    }
    Ok(())
}
