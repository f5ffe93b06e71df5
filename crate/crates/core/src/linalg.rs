//! Small dense helpers shared by the other modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Extreme eigenvalues `(λ_min, λ_max)` of a symmetric matrix.
pub fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lo = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Relative eigenvalue cutoff used to decide numerical rank.
pub fn rank_tolerance(largest: f64, dim: usize) -> f64 {
    largest.abs().max(1.0) * dim.max(1) as f64 * 1e-12
}

/// Orthonormal basis of the null space of a symmetric PSD matrix, together
/// with its smallest eigenvalue on the complement (0 if the matrix is zero).
pub fn psd_null_space(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let d = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = rank_tolerance(top, d);
    let mut cols = Vec::new();
    let mut min_positive = f64::INFINITY;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda <= tol {
            cols.push(eig.eigenvectors.column(k).into_owned());
        } else {
            min_positive = min_positive.min(lambda);
        }
    }
    let basis = if cols.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    (
        basis,
        if min_positive.is_finite() {
            min_positive
        } else {
            0.0
        },
    )
}

pub fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}
