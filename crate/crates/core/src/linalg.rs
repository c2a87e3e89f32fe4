use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Pivots below this fraction of the largest diagonal entry mark the matrix
/// as numerically singular.
const PIVOT_RTOL: f64 = 1e-12;

/// Solves `G x = b` for symmetric positive semi-definite `G`.
///
/// A singular `G` is regularized with `1e-10 * (1 + trace(G) / dim)` on the
/// diagonal, which approximates the minimum-norm solution.
pub(crate) fn solve_psd(gram: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let dim = gram.nrows();
    if dim == 0 {
        return Ok(DVector::zeros(0));
    }
    let max_diag = gram.diagonal().max();
    if let Some(chol) = well_conditioned_cholesky(gram.clone(), max_diag) {
        return Ok(chol.solve(rhs));
    }
    let jitter = 1e-10 * (1.0 + gram.trace() / dim as f64);
    let mut regularized = gram;
    for k in 0..dim {
        regularized[(k, k)] += jitter;
    }
    let chol = Cholesky::new(regularized)
        .ok_or_else(|| Error::Numerical("Cholesky factorization failed after jitter".into()))?;
    Ok(chol.solve(rhs))
}

fn well_conditioned_cholesky(gram: DMatrix<f64>, max_diag: f64) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if !(max_diag > 0.0) {
        return None;
    }
    let chol = Cholesky::new(gram)?;
    let l = chol.l_dirty();
    let singular = (0..l.nrows()).any(|k| l[(k, k)] * l[(k, k)] <= PIVOT_RTOL * max_diag);
    (!singular).then_some(chol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_system() {
        let g = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let x = solve_psd(g.clone(), &b).unwrap();
        assert!((g * &x - b).amax() < 1e-14);
    }

    #[test]
    fn singular_system_gets_near_min_norm_solution() {
        // rank one: x1 + x2 = 2 has minimum-norm solution (1, 1)
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0, 2.0]);
        let x = solve_psd(g, &b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6, "{x}");

        let zero = solve_psd(DMatrix::zeros(2, 2), &DVector::zeros(2)).unwrap();
        assert_eq!(zero, DVector::zeros(2));
    }
}
