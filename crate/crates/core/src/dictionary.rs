//! ISRF dictionaries: truncated SVD of a training matrix, or K-SVD learning
//! started from that SVD.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coder::{omp, EffectiveDictionary, SparseCode};
use crate::error::{Error, Result};
use crate::grid::{normalize, Isrf};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictionaryMethod {
    Svd,
    Ksvd,
}

impl DictionaryMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            DictionaryMethod::Svd => "svd",
            DictionaryMethod::Ksvd => "ksvd",
        }
    }
}

impl std::str::FromStr for DictionaryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "svd" => Ok(Self::Svd),
            "ksvd" => Ok(Self::Ksvd),
            _ => Err(Error::Config(format!("unknown dictionary method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsvdParams {
    pub k_sparse: usize,
    pub iters: usize,
    /// Stop once the relative objective improvement of an iteration falls
    /// below this value.
    pub rel_tol: Option<f64>,
}

impl KsvdParams {
    pub fn new(k_sparse: usize) -> Self {
        Self {
            k_sparse,
            iters: 20,
            rel_tol: Some(1e-4),
        }
    }
}

/// How a dictionary is learned from training ISRFs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DictionaryKind {
    Svd,
    Ksvd(KsvdParams),
}

impl DictionaryKind {
    pub fn method(&self) -> DictionaryMethod {
        match self {
            DictionaryKind::Svd => DictionaryMethod::Svd,
            DictionaryKind::Ksvd(_) => DictionaryMethod::Ksvd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DictionaryMeta {
    pub method: Option<DictionaryMethod>,
    pub n_d: usize,
    pub training_count: usize,
    /// Composition of the training set, e.g. `uniform:103`, `scene:3`.
    pub sources: Vec<String>,
    pub k_sparse: Option<usize>,
    pub iters: Option<usize>,
    /// All singular values of the training matrix, decreasing.
    pub singular_values: Vec<f64>,
    /// K-SVD objective `‖X − ΦA‖_F` after the initial coding and after each
    /// iteration.
    pub objective: Vec<f64>,
}

/// Unit-norm atoms, one per column.
#[derive(Debug, Clone)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    meta: DictionaryMeta,
}

impl Dictionary {
    /// Wraps existing atoms, e.g. read from disk. Columns must be finite and
    /// unit norm.
    pub fn from_atoms(atoms: DMatrix<f64>, method: DictionaryMethod) -> Result<Self> {
        let meta = DictionaryMeta {
            method: Some(method),
            n_d: atoms.ncols(),
            ..Default::default()
        };
        Self::with_meta(atoms, meta)
    }

    pub fn with_meta(atoms: DMatrix<f64>, mut meta: DictionaryMeta) -> Result<Self> {
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dictionary has non-finite entries".into()));
        }
        if let Some(j) = atoms.column_iter().position(|c| (c.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::InvalidArgument(format!("atom {j} is not unit norm")));
        }
        meta.n_d = atoms.ncols();
        Ok(Self { atoms, meta })
    }

    pub fn atoms(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn meta(&self) -> &DictionaryMeta {
        &self.meta
    }

    pub fn n_d(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn method(&self) -> Option<DictionaryMethod> {
        self.meta.method
    }
}

/// Training ISRFs normalized to unit sum, one per column.
fn training_matrix(training: &[Isrf]) -> Result<DMatrix<f64>> {
    let first = training
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
    let rows = first.len();
    if let Some(i) = training.iter().position(|t| t.len() != rows) {
        return Err(Error::InvalidArgument(format!(
            "training ISRF {i} has {} samples, expected {rows}",
            training[i].len()
        )));
    }
    let mut x = DMatrix::zeros(rows, training.len());
    for (j, isrf) in training.iter().enumerate() {
        let n = normalize(isrf)?;
        x.column_mut(j).copy_from_slice(n.values());
    }
    Ok(x)
}

/// Flips a column so that its largest-magnitude entry (first on ties) is
/// positive. Returns true when flipped.
fn fix_sign(mut col: nalgebra::DVectorViewMut<'_, f64>) -> bool {
    let mut best = 0.0;
    let mut sign = 1.0;
    for &v in col.iter() {
        if v.abs() > best {
            best = v.abs();
            sign = v.signum();
        }
    }
    if sign < 0.0 {
        col.neg_mut();
        true
    } else {
        false
    }
}

fn svd_from_matrix(x: &DMatrix<f64>, n_d: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let available = x.nrows().min(x.ncols());
    if n_d == 0 || n_d > available {
        return Err(Error::RankDeficient {
            requested: n_d,
            available,
        });
    }
    let dec = linalg::svd(x);
    let values = dec.s.iter().copied().collect();
    let mut atoms = dec.u.columns(0, n_d).into_owned();
    for j in 0..n_d {
        fix_sign(atoms.column_mut(j));
    }
    Ok((atoms, values))
}

/// The `n_d` leading left singular vectors of the training matrix.
pub fn build_svd(training: &[Isrf], n_d: usize) -> Result<Dictionary> {
    build_svd_from_matrix(&training_matrix(training)?, n_d)
}

/// As [`build_svd`], with training signals given as matrix columns and used
/// without normalization.
pub fn build_svd_from_matrix(x: &DMatrix<f64>, n_d: usize) -> Result<Dictionary> {
    let (atoms, singular_values) = svd_from_matrix(x, n_d)?;
    Dictionary::with_meta(
        atoms,
        DictionaryMeta {
            method: Some(DictionaryMethod::Svd),
            training_count: x.ncols(),
            sources: vec![format!("training:{}", x.ncols())],
            singular_values,
            ..Default::default()
        },
    )
}

fn code_residual(x: &DMatrix<f64>, atoms: &DMatrix<f64>, i: usize, code: &SparseCode) -> DVector<f64> {
    let mut r = x.column(i).into_owned();
    for (&j, &c) in code.support.iter().zip(&code.coefficients) {
        r.axpy(-c, &atoms.column(j), 1.0);
    }
    r
}

fn objective(x: &DMatrix<f64>, atoms: &DMatrix<f64>, codes: &[SparseCode]) -> f64 {
    (0..x.ncols())
        .map(|i| code_residual(x, atoms, i, &codes[i]).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// K-SVD: starting from the SVD dictionary, alternate OMP coding of every
/// training signal with sequential rank-one updates of each atom and its
/// coefficients. During coding a signal keeps its previous code when the new
/// OMP code does not fit better, so the objective never increases. Atoms no
/// signal uses are replaced by the worst-represented training signal.
///
/// K-SVD is a local method: on unlucky data it can settle in a stationary
/// point with coherent atoms even when an exact sparse model exists.
pub fn build_ksvd(training: &[Isrf], n_d: usize, params: KsvdParams) -> Result<Dictionary> {
    build_ksvd_from_matrix(&training_matrix(training)?, n_d, params)
}

/// As [`build_ksvd`], with training signals given as matrix columns and used
/// without normalization.
pub fn build_ksvd_from_matrix(x: &DMatrix<f64>, n_d: usize, params: KsvdParams) -> Result<Dictionary> {
    let learned = ksvd(x, n_d, params)?;
    Dictionary::with_meta(
        learned.atoms,
        DictionaryMeta {
            method: Some(DictionaryMethod::Ksvd),
            training_count: x.ncols(),
            sources: vec![format!("training:{}", x.ncols())],
            k_sparse: Some(params.k_sparse),
            iters: Some(learned.iterations),
            singular_values: learned.singular_values,
            objective: learned.objective,
            ..Default::default()
        },
    )
}

struct Learned {
    atoms: DMatrix<f64>,
    singular_values: Vec<f64>,
    objective: Vec<f64>,
    iterations: usize,
}

fn ksvd(x: &DMatrix<f64>, n_d: usize, params: KsvdParams) -> Result<Learned> {
    if params.iters == 0 {
        return Err(Error::InvalidArgument("K-SVD needs at least one iteration".into()));
    }
    if params.k_sparse == 0 || params.k_sparse > n_d {
        return Err(Error::InvalidArgument(format!(
            "K-SVD sparsity must lie in 1..={n_d}, got {}",
            params.k_sparse
        )));
    }
    let (mut atoms, singular_values) = svd_from_matrix(x, n_d)?;
    let m = x.ncols();
    let x_norm = x.norm();
    let mut codes: Vec<Option<SparseCode>> = vec![None; m];
    let mut history = Vec::with_capacity(params.iters + 1);
    let mut iterations = 0;

    for it in 0..params.iters {
        // Sparse coding.
        let psi = EffectiveDictionary::new(atoms.clone())?;
        for (i, slot) in codes.iter_mut().enumerate() {
            let xi = x.column(i).into_owned();
            let fresh = omp(&psi, &xi, params.k_sparse.min(x.nrows()))?;
            match slot {
                Some(old) => {
                    let old_r = code_residual(x, &atoms, i, old).norm();
                    if fresh.residual_norm < old_r {
                        *slot = Some(fresh);
                    }
                }
                None => *slot = Some(fresh),
            }
        }
        let mut current: Vec<SparseCode> = codes.iter().map(|c| c.clone().expect("coded")).collect();
        if it == 0 {
            history.push(objective(x, &atoms, &current));
        }

        // Dictionary update, one atom at a time.
        let mut replaced: Vec<usize> = Vec::new();
        for j in 0..n_d {
            let users: Vec<(usize, usize)> = current
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.support.iter().position(|&s| s == j).map(|p| (i, p)))
                .collect();
            if users.is_empty() {
                let worst = (0..m)
                    .filter(|i| !replaced.contains(i))
                    .map(|i| (i, code_residual(x, &atoms, i, &current[i]).norm()))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
                if let Some((i, _)) = worst {
                    let col = x.column(i).normalize();
                    atoms.set_column(j, &col);
                    replaced.push(i);
                }
                continue;
            }
            let mut err = DMatrix::zeros(x.nrows(), users.len());
            for (c, &(i, p)) in users.iter().enumerate() {
                let mut r = code_residual(x, &atoms, i, &current[i]);
                r.axpy(current[i].coefficients[p], &atoms.column(j), 1.0);
                err.set_column(c, &r);
            }
            let dec = linalg::svd(&err);
            let sigma = dec.s[0];
            let u = dec.u.column(0).into_owned();
            let v = dec.v_t.row(0).transpose();
            atoms.set_column(j, &u);
            for (c, &(i, p)) in users.iter().enumerate() {
                current[i].coefficients[p] = sigma * v[c];
            }
        }
        for (i, c) in current.iter_mut().enumerate() {
            c.residual_norm = code_residual(x, &atoms, i, c).norm();
        }
        let obj = objective(x, &atoms, &current);
        let prev = *history.last().expect("initial objective");
        debug_assert!(obj <= prev * (1.0 + 1e-10) + 1e-12 * x_norm, "K-SVD objective rose: {prev} -> {obj}");
        history.push(obj);
        codes = current.into_iter().map(Some).collect();
        iterations = it + 1;
        if let Some(tol) = params.rel_tol {
            if prev > 0.0 && (prev - obj) / prev < tol {
                break;
            }
        }
        if obj == 0.0 {
            break;
        }
    }

    for j in 0..n_d {
        fix_sign(atoms.column_mut(j));
    }
    Ok(Learned {
        atoms,
        singular_values,
        objective: history,
        iterations,
    })
}

/// Builds a dictionary of the requested kind.
pub fn build(training: &[Isrf], n_d: usize, kind: DictionaryKind) -> Result<Dictionary> {
    match kind {
        DictionaryKind::Svd => build_svd(training, n_d),
        DictionaryKind::Ksvd(p) => build_ksvd(training, n_d, p),
    }
}

/// Every `stride`-th uniform-scene ISRF plus the given scene ISRFs.
pub fn build_mixed(
    uniform: &[Isrf],
    scene: &[Isrf],
    uniform_stride: usize,
    n_d: usize,
    kind: DictionaryKind,
) -> Result<Dictionary> {
    if uniform_stride == 0 {
        return Err(Error::InvalidArgument("uniform stride must be >= 1".into()));
    }
    let picked: Vec<Isrf> = uniform.iter().step_by(uniform_stride).cloned().collect();
    let n_uniform = picked.len();
    let mut training = picked;
    training.extend_from_slice(scene);
    if training.is_empty() {
        return Err(Error::InvalidArgument("mixed training set is empty".into()));
    }
    let dict = build(&training, n_d, kind)?;
    let mut meta = dict.meta.clone();
    meta.sources = vec![
        format!("uniform:{n_uniform} (stride {uniform_stride} of {})", uniform.len()),
        format!("scene:{}", scene.len()),
    ];
    Dictionary::with_meta(dict.atoms, meta)
}
