//! Small dense symmetric helpers built on nalgebra's Cholesky.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Smallest admissible ratio `L_jj^2 / M_jj`. Below this, column `j` is
/// numerically a combination of the preceding columns.
const PIVOT_RATIO_TOL: f64 = 1e-11;

/// Cholesky factorization that rejects numerically singular matrices.
///
/// The check is scale invariant: each squared pivot is compared against the
/// diagonal entry it came from, so badly scaled but well-posed matrices pass.
pub fn spd_factor(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if m.nrows() == 0 || m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let chol = Cholesky::new(m.clone())?;
    let l = chol.l_dirty();
    for j in 0..m.nrows() {
        let d = m[(j, j)];
        let p = l[(j, j)];
        if d <= 0.0 || p * p < PIVOT_RATIO_TOL * d {
            return None;
        }
    }
    Some(chol)
}

pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    spd_factor(m).map(|c| symmetrize(&c.inverse()))
}

pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    spd_factor(m).map(|c| c.solve(b))
}

/// `v^T M^{-1} v` for symmetric positive definite `M`.
pub fn inv_quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> Option<f64> {
    let chol = spd_factor(m)?;
    let w = chol.l_dirty().solve_lower_triangular(v)?;
    Some(w.dot(&w))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
