//! Run manifests and the resumable per-cell log of sweeps.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use spirit_core::forward::NOISE_RNG;

use crate::config::RunConfig;

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    config: &'a RunConfig,
    seeds: &'a [u64],
    rng: &'static str,
    jobs: usize,
    outputs: &'a [String],
    timings: &'a Timings,
}

#[derive(Debug, Default, Serialize)]
pub struct Timings {
    pub total_s: f64,
    /// Seconds per computed cell; cells restored from a resumed log are absent.
    pub cells: BTreeMap<String, f64>,
}

/// SHA-256 of the config's canonical JSON.
pub fn config_hash(cfg: &RunConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects outputs and timings of one command, then writes
/// `manifest_<command>.json`.
pub struct Run<'a> {
    pub cfg: &'a RunConfig,
    command: String,
    pub seeds: Vec<u64>,
    outputs: Vec<String>,
    pub timings: Timings,
    started: Instant,
    jobs: usize,
}

impl<'a> Run<'a> {
    pub fn new(cfg: &'a RunConfig, command: &str, jobs: usize) -> Self {
        Self {
            cfg,
            command: command.to_string(),
            seeds: vec![cfg.seed],
            outputs: Vec::new(),
            timings: Timings::default(),
            started: Instant::now(),
            jobs,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    /// Registers an output file and returns its path.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.path(name)
    }

    pub fn finish(mut self) -> anyhow::Result<PathBuf> {
        self.timings.total_s = self.started.elapsed().as_secs_f64();
        let name = format!("manifest_{}.json", self.command.replace(' ', "_"));
        let path = self.path(&name);
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: &self.command,
            config_sha256: config_hash(self.cfg),
            config: self.cfg,
            seeds: &self.seeds,
            rng: NOISE_RNG,
            jobs: self.jobs,
            outputs: &self.outputs,
            timings: &self.timings,
        };
        spirit_core::io::write_json(&path, &m)?;
        Ok(path)
    }
}

/// Append-only JSON-lines log of finished sweep cells, keyed by a string.
/// A resumed run reuses logged cells whose config hash matches.
pub struct CellLog {
    file: File,
    hash: String,
    done: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize, serde::Deserialize)]
struct Entry {
    config_sha256: String,
    key: String,
    value: serde_json::Value,
}

impl CellLog {
    pub fn open(path: &Path, cfg: &RunConfig, resume: bool) -> anyhow::Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let hash = config_hash(cfg);
        let mut done = BTreeMap::new();
        if resume && path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                // A torn last line from an interrupted run is skipped.
                if let Ok(e) = serde_json::from_str::<Entry>(&line?) {
                    if e.config_sha256 == hash {
                        done.insert(e.key, e.value);
                    }
                }
            }
        }
        // Rewritten with only the reusable entries so appends start on a clean line.
        let mut file = File::create(path)?;
        for (key, value) in &done {
            let entry = Entry { config_sha256: hash.clone(), key: key.clone(), value: value.clone() };
            writeln!(file, "{}", serde_json::to_string(&entry)?)?;
        }
        file.flush()?;
        Ok(Self { file, hash, done })
    }

    /// Returns the logged value of `key`, or computes, logs and times it.
    pub fn cell<T, F>(&mut self, key: &str, timings: &mut Timings, compute: F) -> anyhow::Result<T>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> anyhow::Result<T>,
    {
        if let Some(v) = self.done.get(key) {
            if let Ok(t) = serde_json::from_value(v.clone()) {
                log::info!("cell {key}: resumed");
                return Ok(t);
            }
        }
        let start = Instant::now();
        let value = compute().map_err(|e| e.context(format!("sweep cell {key} failed")))?;
        timings.cells.insert(key.to_string(), start.elapsed().as_secs_f64());
        let entry = Entry {
            config_sha256: self.hash.clone(),
            key: key.to_string(),
            value: serde_json::to_value(&value)?,
        };
        writeln!(self.file, "{}", serde_json::to_string(&entry)?)?;
        self.file.flush()?;
        self.done.insert(entry.key, entry.value);
        log::info!("cell {key}: {:.2} s", start.elapsed().as_secs_f64());
        Ok(value)
    }
}
