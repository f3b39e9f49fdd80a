//! Synthetic input bundle: templates, reference, training ISRFs, scene
//! variants and a ready-to-run config.

use std::path::{Path, PathBuf};

use spirit_core::eval::Method;
use spirit_core::synthetic::{InstrumentSpec, SceneDistortion, Shape};
use spirit_core::{io, IsrfTemplate, IsrfTemplateSet};

use crate::config::{DataConfig, EstimateSection, GridConfig, KsvdSection, RunConfig, SceneConfig, SweepSection};

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub seed: u64,
    pub centers: usize,
    pub n_half: usize,
    pub shape: Shape,
    pub drift: f64,
    pub templates: usize,
    pub training: usize,
    pub scenes: usize,
    pub n_obs: usize,
}

impl Default for DemoOptions {
    fn default() -> Self {
        let spec = InstrumentSpec::small(1);
        Self {
            seed: 1,
            centers: spec.n_centers,
            n_half: spec.n_half,
            shape: spec.family.shape,
            drift: spec.family.drift,
            templates: 17,
            training: 40,
            scenes: 3,
            n_obs: 80,
        }
    }
}

fn rel(name: &str) -> Option<PathBuf> {
    Some(PathBuf::from(name))
}

/// Writes the bundle into `dir` and returns the path of its `config.toml`.
pub fn write_demo(dir: &Path, opts: &DemoOptions) -> anyhow::Result<PathBuf> {
    let mut spec = InstrumentSpec::small(opts.seed);
    spec.n_centers = opts.centers;
    spec.n_half = opts.n_half;
    spec.family.shape = opts.shape;
    spec.family.drift = opts.drift;
    let inst = spec.build()?;
    std::fs::create_dir_all(dir)?;

    let templates = inst.templates(opts.templates, 2)?;
    io::write_templates(&dir.join("templates.csv"), &templates)?;
    io::write_reference(&dir.join("reference.csv"), &inst.reference)?;
    io::write_isrf_list(&dir.join("training.csv"), &inst.grid.offsets(), &inst.training(opts.training)?)?;

    let distortions = SceneDistortion::series(opts.scenes, spec.family.width_nm);
    let truth = inst.truth()?;
    let mid = &truth[truth.len() / 2];
    let offsets = inst.grid.offsets();
    let examples = distortions
        .iter()
        .map(|d| d.isrf(&offsets, mid))
        .collect::<spirit_core::Result<Vec<_>>>()?;
    io::write_isrf_list(&dir.join("scene_examples.csv"), &offsets, &examples)?;
    let mut scenes = Vec::new();
    for (i, d) in distortions.iter().enumerate() {
        let set = IsrfTemplateSet::new(
            templates.instrument(),
            templates
                .templates()
                .iter()
                .map(|t| IsrfTemplate::new(t.center, t.offsets.clone(), d.apply(&t.offsets, &t.values)))
                .collect::<spirit_core::Result<Vec<_>>>()?,
        )?;
        let name = format!("scene{i}_templates.csv");
        io::write_templates(&dir.join(&name), &set)?;
        scenes.push(SceneConfig {
            name: format!("scene{i}"),
            fov: 0,
            templates: name.into(),
        });
    }

    let n_obs = opts.n_obs.min(opts.centers / 3).max(1);
    let cfg = RunConfig {
        instrument: format!("synthetic-{}", opts.seed),
        seed: opts.seed,
        out: "out".into(),
        grid: GridConfig {
            delta: spec.delta,
            n_half: spec.n_half,
            start_nm: spec.start_nm,
            step_nm: spec.center_step,
            count: spec.n_centers,
        },
        data: DataConfig {
            templates: rel("templates.csv"),
            reference: rel("reference.csv"),
            training: rel("training.csv"),
            scene_examples: rel("scene_examples.csv"),
            scenes,
            ..Default::default()
        },
        estimate: EstimateSection {
            methods: vec![Method::OmpSvd, Method::OmpKsvd, Method::LassoSvd, Method::Gauss, Method::SuperGauss],
            n_obs,
            ..Default::default()
        },
        ksvd: KsvdSection::default(),
        sweep: SweepSection {
            n_obs_list: [20, 40, 60, 80].into_iter().filter(|&n| n <= n_obs).collect(),
            ..Default::default()
        },
    };
    let path = dir.join("config.toml");
    std::fs::write(&path, toml::to_string(&cfg)?)?;
    Ok(path)
}
