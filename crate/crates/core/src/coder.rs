//! Sparse coding of the windowed inverse problem `s_l ≈ Ψ_l α_l`, with
//! `Ψ_l = R_l Φ`.
//!
//! OMP solves the ℓ0-constrained form greedily. The ℓ1 form
//! `‖s − Ψα‖² + γ‖α‖₁` is solved by cyclic coordinate descent with
//! soft-thresholding; [`lasso_target_k`] tunes γ to reach a requested number
//! of atoms and then re-fits the surviving coefficients by least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::forward::WindowedOperator;
use crate::linalg::{lstsq, select_columns};

/// Coefficients below this magnitude are treated as zero.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;
/// OMP stops early once the residual norm falls below this fraction of `‖s‖`.
pub const OMP_RESIDUAL_FLOOR: f64 = 1e-14;

const LASSO_TOL: f64 = 1e-10;
const LASSO_MAX_SWEEPS: usize = 100_000;

/// The effective dictionary `Ψ = R Φ` of one window.
#[derive(Debug, Clone)]
pub struct EffectiveDictionary {
    psi: DMatrix<f64>,
    norms: Vec<f64>,
}

impl EffectiveDictionary {
    pub fn new(psi: DMatrix<f64>) -> Result<Self> {
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("effective dictionary has non-finite entries".into()));
        }
        let norms = psi.column_iter().map(|c| c.norm()).collect();
        Ok(Self { psi, norms })
    }

    pub fn from_operator(op: &WindowedOperator, dict: &Dictionary) -> Result<Self> {
        if op.matrix().ncols() != dict.atoms().nrows() {
            return Err(Error::InvalidArgument(format!(
                "operator has {} columns but atoms have {} samples",
                op.matrix().ncols(),
                dict.atoms().nrows()
            )));
        }
        Self::new(op.matrix() * dict.atoms())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn rows(&self) -> usize {
        self.psi.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.psi.ncols()
    }

    fn check_signal(&self, s: &DVector<f64>) -> Result<()> {
        if s.len() != self.rows() {
            return Err(Error::InvalidArgument(format!(
                "signal has {} samples, dictionary has {} rows",
                s.len(),
                self.rows()
            )));
        }
        Ok(())
    }
}

/// A sparse coefficient vector stored on its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseCode {
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    /// The least-squares system on the support was rank deficient (or
    /// underdetermined) and a minimum-norm solution was used.
    pub rank_deficient: bool,
    /// Penalty used, for LASSO codes.
    pub gamma: Option<f64>,
    /// Requested support size when it could not be met exactly.
    pub target_k: Option<usize>,
}

impl SparseCode {
    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn dense(&self, n_atoms: usize) -> DVector<f64> {
        let mut a = DVector::zeros(n_atoms);
        for (&j, &c) in self.support.iter().zip(&self.coefficients) {
            a[j] = c;
        }
        a
    }

    pub fn missed_target(&self) -> bool {
        self.target_k.is_some_and(|t| t != self.k())
    }
}

fn residual(psi: &DMatrix<f64>, s: &DVector<f64>, support: &[usize], coefs: &[f64]) -> DVector<f64> {
    let mut r = s.clone();
    for (&j, &c) in support.iter().zip(coefs) {
        r.axpy(-c, &psi.column(j), 1.0);
    }
    r
}

/// Orthogonal matching pursuit with exactly `k` selections (fewer only when
/// the residual vanishes first). Each step picks the column maximizing
/// `|ψ_jᵀ r| / ‖ψ_j‖`, lowest index on ties, then re-solves all coefficients
/// on the support by least squares.
pub fn omp(psi: &EffectiveDictionary, s: &DVector<f64>, k: usize) -> Result<SparseCode> {
    psi.check_signal(s)?;
    let limit = psi.n_atoms().min(psi.rows());
    if k == 0 || k > limit {
        return Err(Error::InvalidArgument(format!(
            "OMP sparsity must lie in 1..={limit}, got {k}"
        )));
    }
    let a = &psi.psi;
    let s_norm = s.norm();
    let floor = OMP_RESIDUAL_FLOOR * s_norm;
    let mut support: Vec<usize> = Vec::with_capacity(k);
    let mut coefs: Vec<f64> = Vec::new();
    let mut r = s.clone();
    let mut r_norm = s_norm;
    let mut rank_deficient = false;

    while support.len() < k {
        if r_norm <= floor {
            break;
        }
        let corr = a.tr_mul(&r);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..a.ncols() {
            if psi.norms[j] == 0.0 || support.contains(&j) {
                continue;
            }
            let score = corr[j].abs() / psi.norms[j];
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((j, score));
            }
        }
        let Some((j, _)) = best else { break };
        support.push(j);
        let sub = select_columns(a, &support);
        let sol = lstsq(&sub, s);
        rank_deficient = sol.rank_deficient(support.len());
        coefs = sol.x.iter().copied().collect();
        r = residual(a, s, &support, &coefs);
        r_norm = r.norm();
    }

    Ok(SparseCode {
        support,
        coefficients: coefs,
        residual_norm: r_norm,
        rank_deficient,
        gamma: None,
        target_k: None,
    })
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// `‖s − Ψα‖² + γ‖α‖₁`.
pub fn lasso_objective(psi: &EffectiveDictionary, s: &DVector<f64>, alpha: &DVector<f64>, gamma: f64) -> f64 {
    (s - &psi.psi * alpha).norm_squared() + gamma * alpha.lp_norm(1)
}

/// Coordinate descent state shared by the plain and target-size solvers.
struct LassoSolver {
    gram: DMatrix<f64>,
    corr: DVector<f64>,
}

impl LassoSolver {
    fn new(psi: &EffectiveDictionary, s: &DVector<f64>) -> Self {
        Self {
            gram: psi.psi.tr_mul(&psi.psi),
            corr: psi.psi.tr_mul(s),
        }
    }

    /// Runs cyclic sweeps from `alpha` until the largest coefficient change
    /// drops below the tolerance. `on_sweep` sees the iterate after each sweep.
    fn solve(&self, gamma: f64, alpha: &mut DVector<f64>, mut on_sweep: impl FnMut(&DVector<f64>)) -> usize {
        let n = alpha.len();
        let half = 0.5 * gamma;
        let mut g_alpha = &self.gram * &*alpha;
        for sweep in 1..=LASSO_MAX_SWEEPS {
            let mut max_change: f64 = 0.0;
            for j in 0..n {
                let gjj = self.gram[(j, j)];
                if gjj <= 0.0 {
                    continue;
                }
                let old = alpha[j];
                let rho = self.corr[j] - g_alpha[j] + gjj * old;
                let new = soft_threshold(rho, half) / gjj;
                let delta = new - old;
                if delta != 0.0 {
                    alpha[j] = new;
                    g_alpha.axpy(delta, &self.gram.column(j), 1.0);
                    max_change = max_change.max(delta.abs());
                }
            }
            on_sweep(alpha);
            if max_change < LASSO_TOL {
                return sweep;
            }
        }
        LASSO_MAX_SWEEPS
    }
}

fn code_from_dense(psi: &EffectiveDictionary, s: &DVector<f64>, alpha: &DVector<f64>, gamma: f64) -> SparseCode {
    let support: Vec<usize> = (0..alpha.len()).filter(|&j| alpha[j].abs() > SUPPORT_THRESHOLD).collect();
    let coefficients: Vec<f64> = support.iter().map(|&j| alpha[j]).collect();
    let r = residual(&psi.psi, s, &support, &coefficients);
    SparseCode {
        support,
        coefficients,
        residual_norm: r.norm(),
        rank_deficient: false,
        gamma: Some(gamma),
        target_k: None,
    }
}

/// Minimizer of `‖s − Ψα‖² + γ‖α‖₁`. With `γ = 0` this is the
/// (minimum-norm) least-squares solution, flagged when underdetermined.
pub fn lasso(psi: &EffectiveDictionary, s: &DVector<f64>, gamma: f64) -> Result<SparseCode> {
    psi.check_signal(s)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("LASSO penalty must be >= 0, got {gamma}")));
    }
    if gamma == 0.0 {
        let sol = lstsq(&psi.psi, s);
        let mut code = code_from_dense(psi, s, &sol.x, 0.0);
        code.rank_deficient = sol.rank_deficient(psi.n_atoms());
        return Ok(code);
    }
    let solver = LassoSolver::new(psi, s);
    let mut alpha = DVector::zeros(psi.n_atoms());
    solver.solve(gamma, &mut alpha, |_| {});
    Ok(code_from_dense(psi, s, &alpha, gamma))
}

/// Objective value after every coordinate-descent sweep, starting from zero.
pub fn lasso_objective_trace(psi: &EffectiveDictionary, s: &DVector<f64>, gamma: f64) -> Result<Vec<f64>> {
    psi.check_signal(s)?;
    let solver = LassoSolver::new(psi, s);
    let mut alpha = DVector::zeros(psi.n_atoms());
    let mut trace = vec![lasso_objective(psi, s, &alpha, gamma)];
    solver.solve(gamma, &mut alpha, |a| trace.push(lasso_objective(psi, s, a, gamma)));
    Ok(trace)
}

/// Bisects γ over `[0, 2·max|Ψᵀs|]` until the LASSO support has `k` atoms,
/// then debiases. When `k` is not reached the closest support size found is
/// kept and `target_k` records the request.
pub fn lasso_target_k(psi: &EffectiveDictionary, s: &DVector<f64>, k: usize) -> Result<SparseCode> {
    psi.check_signal(s)?;
    if k == 0 {
        return Err(Error::InvalidArgument("target support size must be >= 1".into()));
    }
    let solver = LassoSolver::new(psi, s);
    let gamma_max = 2.0 * solver.corr.amax();
    let mut best: Option<SparseCode> = None;
    if gamma_max > 0.0 {
        let (mut lo, mut hi) = (0.0, gamma_max);
        // Warm start from the sparser side keeps sweeps short.
        let mut warm_hi = DVector::zeros(psi.n_atoms());
        for _ in 0..200 {
            let gamma = 0.5 * (lo + hi);
            if gamma <= lo || gamma >= hi {
                break;
            }
            let mut alpha = warm_hi.clone();
            solver.solve(gamma, &mut alpha, |_| {});
            let code = code_from_dense(psi, s, &alpha, gamma);
            let size = code.k();
            let closer = best
                .as_ref()
                .is_none_or(|b| size.abs_diff(k) < b.k().abs_diff(k));
            if closer {
                best = Some(code);
            }
            if size == k {
                break;
            }
            if size > k {
                lo = gamma;
            } else {
                hi = gamma;
                warm_hi = alpha;
            }
        }
    }
    let mut code = best.unwrap_or_else(|| SparseCode {
        support: vec![],
        coefficients: vec![],
        residual_norm: s.norm(),
        rank_deficient: false,
        gamma: Some(0.0),
        target_k: None,
    });
    if code.k() != k {
        log::debug!("LASSO reached {} atoms instead of {k}", code.k());
        code.target_k = Some(k);
    }
    if code.support.is_empty() {
        return Ok(code);
    }
    let mut out = debias(psi, s, &code)?;
    out.gamma = code.gamma;
    out.target_k = code.target_k;
    Ok(out)
}

/// Re-fits the coefficients of `code` by least squares on its support.
pub fn debias(psi: &EffectiveDictionary, s: &DVector<f64>, code: &SparseCode) -> Result<SparseCode> {
    psi.check_signal(s)?;
    if code.support.is_empty() {
        return Err(Error::NoSupport);
    }
    if let Some(&j) = code.support.iter().find(|&&j| j >= psi.n_atoms()) {
        return Err(Error::OutOfRange(format!("support index {j} >= {}", psi.n_atoms())));
    }
    let sub = select_columns(&psi.psi, &code.support);
    let sol = lstsq(&sub, s);
    let coefficients: Vec<f64> = sol.x.iter().copied().collect();
    let r = residual(&psi.psi, s, &code.support, &coefficients);
    Ok(SparseCode {
        support: code.support.clone(),
        coefficients,
        residual_norm: r.norm(),
        rank_deficient: sol.rank_deficient(code.support.len()),
        gamma: code.gamma,
        target_k: code.target_k,
    })
}

/// `Φ α` on the support of `code`. The result is neither clamped nor
/// renormalized.
pub fn reconstruct_isrf(dict: &Dictionary, code: &SparseCode) -> Result<Vec<f64>> {
    let atoms = dict.atoms();
    let mut out = DVector::zeros(atoms.nrows());
    for (&j, &c) in code.support.iter().zip(&code.coefficients) {
        if j >= atoms.ncols() {
            return Err(Error::OutOfRange(format!("support index {j} >= {}", atoms.ncols())));
        }
        out.axpy(c, &atoms.column(j), 1.0);
    }
    Ok(out.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::DictionaryMethod;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
        random_matrix(rng, rows, cols).qr().q()
    }

    fn ed(m: DMatrix<f64>) -> EffectiveDictionary {
        EffectiveDictionary::new(m).unwrap()
    }

    /// Best size-`k` support by trying all of them.
    fn exhaustive_best(psi: &DMatrix<f64>, s: &DVector<f64>, k: usize) -> (Vec<usize>, f64) {
        fn combos(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for j in start..n {
                cur.push(j);
                combos(n, k, j + 1, cur, out);
                cur.pop();
            }
        }
        let mut all = Vec::new();
        combos(psi.ncols(), k, 0, &mut Vec::new(), &mut all);
        all.into_iter()
            .map(|sup| {
                let sub = select_columns(psi, &sup);
                let x = sub.clone().svd(true, true).solve(s, 1e-14).unwrap();
                let r = (s - sub * x).norm();
                (sup, r)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    }

    #[test]
    fn single_atom_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_matrix(&mut rng, 8, 5);
        let s = m.column(2) * 3.0;
        let code = omp(&ed(m), &s, 1).unwrap();
        assert_eq!(code.support, vec![2]);
        assert!((code.coefficients[0] - 3.0).abs() < 1e-12);
        assert!(code.residual_norm < 1e-12);
    }

    #[test]
    fn orthogonal_signal_picks_index_zero() {
        // columns live in the first three coordinates, s in the fourth
        let mut m = DMatrix::zeros(4, 3);
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 2.0;
        m[(2, 2)] = 1.0;
        let s = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.5]);
        let code = omp(&ed(m), &s, 1).unwrap();
        assert_eq!(code.support, vec![0]);
        assert_eq!(code.coefficients, vec![0.0]);
        assert!((code.residual_norm - 1.5).abs() < 1e-15);
    }

    #[test]
    fn omp_matches_exhaustive_search_on_orthonormal_designs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let n_d = 8 + trial % 8;
            let psi = orthonormal(&mut rng, 30, n_d);
            let mut idx: Vec<usize> = (0..n_d).collect();
            for i in 0..3 {
                let j = rng.random_range(i..n_d);
                idx.swap(i, j);
            }
            let mut truth: Vec<(usize, f64)> = idx[..3]
                .iter()
                .map(|&j| (j, rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }))
                .collect();
            let mut s = DVector::zeros(30);
            for &(j, c) in &truth {
                s.axpy(c, &psi.column(j), 1.0);
            }
            let code = omp(&ed(psi.clone()), &s, 3).unwrap();
            let (best, best_r) = exhaustive_best(&psi, &s, 3);
            let mut got = code.support.clone();
            got.sort();
            assert_eq!(got, best);
            assert!(best_r < 1e-12);
            truth.sort_by_key(|t| t.0);
            for (j, c) in truth {
                let pos = code.support.iter().position(|&x| x == j).unwrap();
                assert!((code.coefficients[pos] - c).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn omp_residual_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_matrix(&mut rng, 20, 12);
        let s = DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0));
        let psi = ed(m);
        let mut last = s.norm();
        for k in 1..=12 {
            let code = omp(&psi, &s, k).unwrap();
            assert!(code.residual_norm < last);
            last = code.residual_norm;
            let mut sorted = code.support.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), k);
        }
    }

    #[test]
    fn omp_rejects_bad_k() {
        let psi = ed(DMatrix::identity(3, 3));
        let s = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(omp(&psi, &s, 0).is_err());
        assert!(omp(&psi, &s, 4).is_err());
    }

    #[test]
    fn lasso_full_shrinkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_matrix(&mut rng, 10, 6);
        let s = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
        let gmax = 2.0 * m.tr_mul(&s).amax();
        let code = lasso(&ed(m), &s, gmax).unwrap();
        assert!(code.support.is_empty());
        assert!((code.residual_norm - s.norm()).abs() < 1e-15);
    }

    #[test]
    fn lasso_orthonormal_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let psi = orthonormal(&mut rng, 15, 6);
            let s = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
            let gamma = rng.random_range(0.0..1.5);
            let code = lasso(&ed(psi.clone()), &s, gamma).unwrap();
            let dense = code.dense(6);
            let proj = psi.tr_mul(&s);
            for j in 0..6 {
                assert!((dense[j] - soft_threshold(proj[j], gamma / 2.0)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lasso_zero_penalty_square_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = random_matrix(&mut rng, 6, 6);
        let s = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let code = lasso(&ed(m), &s, 0.0).unwrap();
        assert!(code.residual_norm < 1e-12);
        assert!(!code.rank_deficient);
        let wide = random_matrix(&mut rng, 3, 6);
        let code = lasso(&ed(wide), &DVector::from_vec(vec![1.0, 2.0, 3.0]), 0.0).unwrap();
        assert!(code.rank_deficient);
    }

    #[test]
    fn lasso_objective_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = random_matrix(&mut rng, 12, 9);
        let s = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
        let trace = lasso_objective_trace(&ed(m), &s, 0.3).unwrap();
        assert!(trace.len() > 2);
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn orthonormal_full_support_agrees_with_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let psi = orthonormal(&mut rng, 12, 5);
        let s = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
        let proj = psi.tr_mul(&s);
        let e = ed(psi);
        let o = omp(&e, &s, 5).unwrap().dense(5);
        let l = lasso(&e, &s, 0.0).unwrap().dense(5);
        assert!((o - &proj).amax() < 1e-10);
        assert!((l - &proj).amax() < 1e-10);
    }

    #[test]
    fn target_k_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = random_matrix(&mut rng, 20, 6);
        let e = ed(m.clone());
        let s = DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0));
        let full = lasso_target_k(&e, &s, 6).unwrap();
        assert_eq!(full.k(), 6);
        let single = lasso_target_k(&e, &(m.column(4) * 2.0), 1).unwrap();
        assert_eq!(single.support, vec![4]);
        assert!((single.coefficients[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn target_k_within_one_of_request() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let m = random_matrix(&mut rng, 25, 10);
            let e = ed(m);
            let s = DVector::from_fn(25, |_, _| rng.random_range(-1.0..1.0));
            // sizes reachable on a fine γ grid
            let gmax = 2.0 * e.matrix().tr_mul(&s).amax();
            let reachable: Vec<usize> = (1..400)
                .map(|i| lasso(&e, &s, gmax * i as f64 / 400.0).unwrap().k())
                .collect();
            for k in 1..=8 {
                let code = lasso_target_k(&e, &s, k).unwrap();
                if reachable.contains(&k) {
                    assert!(code.k().abs_diff(k) <= 1, "k={k} got {}", code.k());
                }
                if code.k() == k {
                    assert!(code.target_k.is_none());
                } else {
                    assert_eq!(code.target_k, Some(k));
                }
            }
        }
    }

    #[test]
    fn debias_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let m = random_matrix(&mut rng, 15, 8);
        let e = ed(m.clone());
        let s = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
        let code = omp(&e, &s, 3).unwrap();
        let again = debias(&e, &s, &code).unwrap();
        for (a, b) in code.coefficients.iter().zip(&again.coefficients) {
            assert!((a - b).abs() < 1e-12);
        }
        // noiseless sparse signal: shrinkage bias removed
        let clean = m.column(1) * 1.5 + m.column(6) * -0.7;
        let shrunk = lasso(&e, &clean, 0.5).unwrap();
        let fixed = debias(&e, &clean, &shrunk).unwrap();
        assert!(shrunk.residual_norm > 1e-3);
        assert!(fixed.residual_norm < 1e-10);
        let empty = SparseCode {
            support: vec![],
            coefficients: vec![],
            residual_norm: 1.0,
            rank_deficient: false,
            gamma: None,
            target_k: None,
        };
        assert!(matches!(debias(&e, &s, &empty), Err(Error::NoSupport)));
        // square system on the support
        let sq = ed(random_matrix(&mut rng, 4, 4));
        let s4 = DVector::from_vec(vec![0.3, -1.0, 2.0, 0.1]);
        let all = SparseCode {
            support: vec![0, 1, 2, 3],
            coefficients: vec![0.0; 4],
            residual_norm: s4.norm(),
            rank_deficient: false,
            gamma: None,
            target_k: None,
        };
        assert!(debias(&sq, &s4, &all).unwrap().residual_norm < 1e-12);
    }

    #[test]
    fn reconstruct_cases() {
        let atoms = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.6, 0.8]);
        let dict = Dictionary::from_atoms(atoms, DictionaryMethod::Svd).unwrap();
        let zero = SparseCode {
            support: vec![1],
            coefficients: vec![0.0],
            residual_norm: 0.0,
            rank_deficient: false,
            gamma: None,
            target_k: None,
        };
        assert_eq!(reconstruct_isrf(&dict, &zero).unwrap(), vec![0.0; 3]);
        let one = SparseCode {
            coefficients: vec![1.0],
            ..zero
        };
        assert_eq!(reconstruct_isrf(&dict, &one).unwrap(), vec![0.0, 0.6, 0.8]);
    }
}
