//! Dense linear algebra helpers on top of nalgebra: a semidefinite
//! Cholesky that tolerates (and flags) exactly collinear coordinates, a
//! relative-cutoff pseudo-inverse, and Gaussian conditioning data.
//!
//! The Cholesky is hand-rolled because library factorizations reject
//! semidefinite inputs, and rank deficiency is a supported regime here
//! (perfectly correlated inputs), not an error.

use nalgebra::DMatrix;

/// Lower-triangular C with C*C^T = a for symmetric positive semidefinite a.
///
/// Column m is zeroed (and flagged) when its pivot, the conditional variance
/// of coordinate m given 0..m-1, falls below rel_tol * a[(m,m)]. For an
/// exactly singular input the residual column is zero anyway, so the product
/// still reproduces a; for a nearly singular one the perturbation is of the
/// threshold's order.
pub fn semidef_cholesky(a: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, Vec<bool>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "square matrix required");
    let mut c = DMatrix::<f64>::zeros(n, n);
    let mut degenerate = vec![false; n];
    for m in 0..n {
        let mut pivot = a[(m, m)];
        for t in 0..m {
            pivot -= c[(m, t)] * c[(m, t)];
        }
        let tol = rel_tol * a[(m, m)].abs();
        if pivot <= tol {
            degenerate[m] = true;
            continue; // whole column stays zero
        }
        let root = pivot.sqrt();
        c[(m, m)] = root;
        for l in m + 1..n {
            let mut s = a[(l, m)];
            for t in 0..m {
                s -= c[(l, t)] * c[(m, t)];
            }
            c[(l, m)] = s / root;
        }
    }
    (c, degenerate)
}

/// Moore-Penrose pseudo-inverse with singular values below
/// rel_cutoff * sigma_max treated as zero.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_cutoff: f64) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    svd.pseudo_inverse(rel_cutoff * smax.max(f64::MIN_POSITIVE))
        .expect("svd computed with both factors")
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_eigen_range(a: &DMatrix<f64>) -> (f64, f64) {
    let eig = a.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

/// Submatrix of `a` with the given row and column index sets.
pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Data for sampling X_rest | X_cond = x under a joint Gaussian:
/// conditional mean is mean_rest + w * (x - mean_cond), conditional
/// covariance factor is chol (semidefinite, columns flagged degenerate).
pub struct ConditionalGaussian {
    pub w: DMatrix<f64>,
    pub chol: DMatrix<f64>,
    pub degenerate: Vec<bool>,
}

impl ConditionalGaussian {
    /// Schur complement of cov with respect to the `cond` coordinates.
    /// Uses a pseudo-inverse so exactly collinear conditioning variables
    /// are fine.
    pub fn new(cov: &DMatrix<f64>, cond: &[usize], rest: &[usize], rel_cutoff: f64) -> Self {
        let s_cc = submatrix(cov, cond, cond);
        let s_rc = submatrix(cov, rest, cond);
        let s_rr = submatrix(cov, rest, rest);
        let w = &s_rc * pseudo_inverse(&s_cc, rel_cutoff);
        let cond_cov = &s_rr - &w * s_rc.transpose();
        let (chol, degenerate) = semidef_cholesky(&cond_cov, 1e-12);
        ConditionalGaussian { w, chol, degenerate }
    }
}
