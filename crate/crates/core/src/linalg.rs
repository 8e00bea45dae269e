//! Dense decompositions delegated to `faer`.
//!
//! nalgebra's SVD loses accuracy (and can fail to terminate) on the
//! ill-conditioned designs produced by `{x, x^2, 1/x}` over a narrow price
//! grid, so singular value and symmetric eigenvalue computations go through
//! `faer` instead. Everything else stays in nalgebra types.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Thin SVD `A = U diag(s) V'` with singular values in descending order.
pub(crate) fn thin_svd(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let svd = to_faer(a).thin_svd().ok()?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let k = s.nrows();
    Some((
        DMatrix::from_fn(u.nrows(), k, |i, j| u[(i, j)]),
        DVector::from_fn(k, |i, _| s[i]),
        DMatrix::from_fn(v.nrows(), k, |i, j| v[(i, j)]),
    ))
}

/// Eigenvalues of a symmetric matrix (lower triangle read), ascending.
pub(crate) fn sym_eigenvalues(a: &DMatrix<f64>) -> Option<Vec<f64>> {
    to_faer(a).self_adjoint_eigenvalues(Side::Lower).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_reconstructs() {
        let a = DMatrix::from_fn(6, 3, |i, j| ((i * 3 + j) as f64).sin() + if i == j { 2.0 } else { 0.0 });
        let (u, s, v) = thin_svd(&a).unwrap();
        let back = &u * DMatrix::from_diagonal(&s) * v.transpose();
        assert!((back - &a).amax() < 1e-13);
        assert!(s[0] >= s[1] && s[1] >= s[2]);
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0, 2.0]));
        let ev = sym_eigenvalues(&a).unwrap();
        assert_eq!(ev.len(), 3);
        for (x, y) in ev.iter().zip([-1.0, 2.0, 3.0]) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
