//! Small dense least-squares helpers shared by the coders and dictionary
//! learning.

use nalgebra::{DMatrix, DVector};

/// Minimum-norm least-squares solution of `a x ≈ b`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub x: DVector<f64>,
    pub rank: usize,
}

impl LeastSquares {
    pub fn rank_deficient(&self, ncols: usize) -> bool {
        self.rank < ncols
    }
}

/// Thin singular value decomposition `a = u · diag(s) · v_tᵀ`, singular
/// values in decreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

/// Thin SVD computed with faer. nalgebra's SVD is not used: it returns wrong
/// factors for some exactly low-rank inputs, which K-SVD produces routinely.
pub fn svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Svd {
            u: DMatrix::zeros(m, 0),
            s: DVector::zeros(0),
            v_t: DMatrix::zeros(0, n),
        };
    }
    let fa = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let dec = fa
        .thin_svd()
        .expect("SVD of a finite matrix converges");
    let (u, v, s) = (dec.U(), dec.V(), dec.S().column_vector());
    Svd {
        u: DMatrix::from_fn(m, k, |i, j| u[(i, j)]),
        s: DVector::from_fn(k, |i, _| s[i]),
        v_t: DMatrix::from_fn(k, n, |i, j| v[(j, i)]),
    }
}

/// Solves through the SVD, discarding singular values below
/// `max(m, n) · ε · σ_max`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> LeastSquares {
    let (m, n) = a.shape();
    if n == 0 || m == 0 {
        return LeastSquares {
            x: DVector::zeros(n),
            rank: 0,
        };
    }
    let dec = svd(a);
    let s_max = dec.s.iter().cloned().fold(0.0, f64::max);
    let tol = m.max(n) as f64 * f64::EPSILON * s_max;
    let utb = dec.u.tr_mul(b);
    let mut x = DVector::zeros(n);
    let mut rank = 0;
    for (i, &s) in dec.s.iter().enumerate() {
        if s > tol {
            rank += 1;
            x += dec.v_t.row(i).transpose() * (utb[i] / s);
        }
    }
    LeastSquares { x, rank }
}

/// Columns `cols` of `a` as a new matrix.
pub fn select_columns(a: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}
