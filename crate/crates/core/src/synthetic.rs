//! Synthetic instruments for experiments and tests.
//!
//! An instrument is a wavelength grid, a reference spectrum made of a smooth
//! continuum with seeded absorption lines, and an ISRF family whose shape
//! drifts smoothly with the band position `t ∈ [0, 1]`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{normalize, Isrf, WavelengthGrid};
use crate::reference::ReferenceSpectrum;
use crate::templates::{IsrfTemplate, IsrfTemplateSet};

/// Columns that are exact `k`-sparse combinations of a random orthonormal
/// `dim × n_atoms` dictionary, with coefficients of magnitude in [0.5, 2]
/// and random sign. Returns `(dictionary, signals)`.
pub fn planted_sparse(
    seed: u64,
    dim: usize,
    n_atoms: usize,
    k: usize,
    count: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    assert!(k <= n_atoms && n_atoms <= dim, "invalid planted sizes");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = DMatrix::from_fn(dim, n_atoms, |_, _| rng.random_range(-1.0..1.0))
        .qr()
        .q();
    let mut x = DMatrix::zeros(dim, count);
    for c in 0..count {
        let mut used = Vec::with_capacity(k);
        while used.len() < k {
            let j = rng.random_range(0..n_atoms);
            if used.contains(&j) {
                continue;
            }
            used.push(j);
            let mut a = rng.random_range(0.5..2.0);
            if rng.random_bool(0.5) {
                a = -a;
            }
            let col: DVector<f64> = q.column(j) * a;
            let mut target = x.column_mut(c);
            target += col;
        }
    }
    (q, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Mixture of a flat-topped core, a broad Gaussian wing and a narrow
    /// negative Gaussian at the centre.
    Dipped,
    /// Plain Gaussian whose width grows across the band.
    Gaussian,
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dipped" => Ok(Shape::Dipped),
            "gaussian" => Ok(Shape::Gaussian),
            _ => Err(Error::Config(format!("unknown ISRF shape `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsrfFamily {
    pub shape: Shape,
    /// Characteristic half width in nm.
    pub width_nm: f64,
    /// Scale of the shape change from one band edge to the other.
    pub drift: f64,
}

impl IsrfFamily {
    /// The three fixed components of the dipped family on `offsets`.
    pub fn dipped_basis(&self, offsets: &[f64]) -> [Vec<f64>; 3] {
        let w = self.width_nm;
        let core = offsets.iter().map(|x| (-(x / w).abs().powi(3)).exp()).collect();
        let wing = offsets.iter().map(|x| gauss(*x, 1.6 * w)).collect();
        let dip = offsets.iter().map(|x| -gauss(*x, 0.35 * w)).collect();
        [core, wing, dip]
    }

    /// Mixing weights of the dipped components at band position `t`.
    pub fn dipped_weights(&self, t: f64) -> [f64; 3] {
        let d = self.drift;
        [
            1.0 - 0.3 * d * t,
            0.10 + 0.2 * d * t,
            0.20 + 0.15 * d * (std::f64::consts::PI * t).sin(),
        ]
    }

    /// Gaussian standard deviation at band position `t`.
    pub fn gaussian_sigma(&self, t: f64) -> f64 {
        0.5 * self.width_nm * (1.0 + 0.2 * self.drift * t)
    }

    /// Unnormalized response values at band position `t`.
    pub fn values(&self, offsets: &[f64], t: f64) -> Vec<f64> {
        match self.shape {
            Shape::Dipped => {
                let basis = self.dipped_basis(offsets);
                let c = self.dipped_weights(t);
                (0..offsets.len())
                    .map(|i| (c[0] * basis[0][i] + c[1] * basis[1][i] + c[2] * basis[2][i]).max(0.0))
                    .collect()
            }
            Shape::Gaussian => {
                let s = self.gaussian_sigma(t);
                offsets.iter().map(|x| gauss(*x, s)).collect()
            }
        }
    }

    /// Unit-sum ISRF at band position `t`.
    pub fn isrf(&self, offsets: &[f64], t: f64, center: f64) -> Result<Isrf> {
        normalize(&Isrf::new(self.values(offsets, t), center)?)
    }
}

fn gauss(x: f64, sigma: f64) -> f64 {
    (-0.5 * (x / sigma).powi(2)).exp()
}

/// Asymmetric deformation from non-uniform slit illumination: the response
/// left of `edge_nm` is raised by up to `strength`, with a logistic step of
/// width `softness_nm`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneDistortion {
    pub strength: f64,
    pub edge_nm: f64,
    pub softness_nm: f64,
}

impl SceneDistortion {
    /// A reproducible set of increasingly strong distortions scaled to an
    /// ISRF of half width `width_nm`.
    pub fn series(count: usize, width_nm: f64) -> Vec<SceneDistortion> {
        (0..count)
            .map(|i| SceneDistortion {
                strength: 0.3 + 0.25 * i as f64,
                edge_nm: -0.2 * width_nm * (i % 3) as f64,
                softness_nm: 0.15 * width_nm,
            })
            .collect()
    }

    pub fn apply(&self, offsets: &[f64], values: &[f64]) -> Vec<f64> {
        offsets
            .iter()
            .zip(values)
            .map(|(x, v)| {
                let step = 1.0 / (1.0 + ((x - self.edge_nm) / self.softness_nm).exp());
                v * (1.0 + self.strength * step)
            })
            .collect()
    }

    pub fn isrf(&self, offsets: &[f64], base: &Isrf) -> Result<Isrf> {
        normalize(&Isrf::new(self.apply(offsets, base.values()), base.center())?)
    }
}

/// Smooth continuum with seeded Gaussian absorption lines, sampled every
/// `knot_step` nm over `[lo, hi]`.
pub fn reference_spectrum(seed: u64, lo: f64, hi: f64, knot_step: f64) -> Result<ReferenceSpectrum> {
    if !(hi > lo) || !(knot_step > 0.0) {
        return Err(Error::InvalidArgument("empty reference range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let span = hi - lo;
    let n_lines = ((span / 0.08).ceil() as usize).max(4);
    let lines: Vec<(f64, f64, f64)> = (0..n_lines)
        .map(|_| {
            (
                rng.random_range(lo..hi),
                rng.random_range(0.1..0.8),
                rng.random_range(0.008..0.04),
            )
        })
        .collect();
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let n = (span / knot_step).round() as usize + 1;
    let wl: Vec<f64> = (0..n).map(|i| lo + span * i as f64 / (n - 1) as f64).collect();
    let rad: Vec<f64> = wl
        .iter()
        .map(|&x| {
            let u = (x - lo) / span;
            let continuum = 1.0 + 0.1 * (u * 5.0 + phase).sin() - 0.05 * u;
            let absorb: f64 = lines
                .iter()
                .map(|&(c, depth, w)| depth * gauss(x - c, w))
                .sum();
            continuum * (-absorb).exp()
        })
        .collect();
    ReferenceSpectrum::new(&wl, &rad)
}

/// Parameters of a synthetic instrument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstrumentSpec {
    pub seed: u64,
    /// Offset sampling step Δ in nm.
    pub delta: f64,
    pub n_half: usize,
    pub n_centers: usize,
    pub center_step: f64,
    pub start_nm: f64,
    pub family: IsrfFamily,
}

impl InstrumentSpec {
    /// A small dipped-ISRF instrument: 256 centres, 129 offsets.
    pub fn small(seed: u64) -> Self {
        Self {
            seed,
            delta: 0.01,
            n_half: 64,
            n_centers: 256,
            center_step: 0.02,
            start_nm: 760.0,
            family: IsrfFamily {
                shape: Shape::Dipped,
                width_nm: 0.12,
                drift: 0.02,
            },
        }
    }

    pub fn build(&self) -> Result<Instrument> {
        let grid = WavelengthGrid::regular(
            self.delta,
            self.n_half,
            self.start_nm,
            self.center_step,
            self.n_centers,
        )?;
        let margin = grid.half_width() + 2.0 * self.delta;
        let centers = grid.centers();
        let lo = centers[0] - margin;
        let hi = centers[centers.len() - 1] + margin;
        let reference = reference_spectrum(self.seed, lo, hi, self.delta / 2.0)?;
        Ok(Instrument {
            spec: *self,
            grid,
            reference,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Instrument {
    pub spec: InstrumentSpec,
    pub grid: WavelengthGrid,
    pub reference: ReferenceSpectrum,
}

impl Instrument {
    /// Band position of a wavelength, 0 at the first centre and 1 at the
    /// last.
    pub fn band_position(&self, center: f64) -> f64 {
        let c = self.grid.centers();
        let (a, b) = (c[0], c[c.len() - 1]);
        if b > a {
            (center - a) / (b - a)
        } else {
            0.0
        }
    }

    /// Family ISRF at every grid centre.
    pub fn truth(&self) -> Result<Vec<Isrf>> {
        let offsets = self.grid.offsets();
        self.grid
            .centers()
            .iter()
            .map(|&c| self.spec.family.isrf(&offsets, self.band_position(c), c))
            .collect()
    }

    /// `count` family ISRFs at band positions halfway between evenly spaced
    /// nodes, none of which coincides with a grid centre of a regular grid
    /// with more than `count` centres.
    pub fn training(&self, count: usize) -> Result<Vec<Isrf>> {
        let offsets = self.grid.offsets();
        let c = self.grid.centers();
        let (a, b) = (c[0], c[c.len() - 1]);
        (0..count)
            .map(|i| {
                let t = (i as f64 + 0.5) / count as f64;
                self.spec.family.isrf(&offsets, t, a + t * (b - a))
            })
            .collect()
    }

    /// Family ISRFs applied with each scene distortion.
    pub fn scene_truth(&self, scene: &SceneDistortion) -> Result<Vec<Isrf>> {
        let offsets = self.grid.offsets();
        self.truth()?
            .iter()
            .map(|base| scene.isrf(&offsets, base))
            .collect()
    }

    /// `count` templates spanning the band, each sampled on the offset grid
    /// extended by `pad` samples per side.
    pub fn templates(&self, count: usize, pad: usize) -> Result<IsrfTemplateSet> {
        if count < 2 {
            return Err(Error::InvalidArgument("need at least 2 templates".into()));
        }
        let n_half = (self.grid.n_half() + pad) as i64;
        let offsets: Vec<f64> = (-n_half..=n_half)
            .map(|i| i as f64 * self.grid.delta())
            .collect();
        let c = self.grid.centers();
        let (a, b) = (c[0], c[c.len() - 1]);
        let templates = (0..count)
            .map(|i| {
                let t = i as f64 / (count - 1) as f64;
                let values = self.spec.family.values(&offsets, t);
                IsrfTemplate::new(a + t * (b - a), offsets.clone(), values)
            })
            .collect::<Result<Vec<_>>>()?;
        IsrfTemplateSet::new("synthetic", templates)
    }
}
