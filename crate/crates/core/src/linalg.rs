//! Small dense helpers shared by the retractions and predicates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues below this are rejected by [`spd_sqrt_and_inverse`].
pub const EIGEN_FLOOR: f64 = 1e-14;

/// `(S, S⁻¹)` with `S = M^{1/2}` for symmetric positive definite `M`.
///
/// The input is symmetrized before the eigendecomposition.
pub fn spd_sqrt_and_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.min();
    if !(min > EIGEN_FLOOR) {
        return Err(Error::NotPositiveDefinite { eigenvalue: min });
    }
    let q = &eig.eigenvectors;
    let root: DVector<f64> = eig.eigenvalues.map(f64::sqrt);
    let s = q * DMatrix::from_diagonal(&root) * q.transpose();
    let s_inv = q * DMatrix::from_diagonal(&root.map(|r| 1.0 / r)) * q.transpose();
    Ok((s, s_inv))
}

/// `‖Fᵀ g F − Id‖∞`.
pub fn orthonormality_residual(g: &DMatrix<f64>, f: &DMatrix<f64>) -> f64 {
    let n = f.ncols();
    (f.transpose() * g * f - DMatrix::<f64>::identity(n, n)).amax()
}

/// Least-squares slope of `y` against `x`. `None` with fewer than two points
/// or no spread in `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// Slope of `log err` against `log t` over the pairs with `err > floor`.
pub fn log_log_slope(t: &[f64], err: &[f64], floor: f64) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(err)
        .filter(|(_, &e)| e > floor && e.is_finite())
        .map(|(&t, &e)| (t.ln(), e.ln()))
        .unzip();
    fit_slope(&lx, &ly)
}
