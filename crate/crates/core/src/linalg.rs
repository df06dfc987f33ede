//! Small dense least-squares helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Diagonal guard added to the Gram matrix of full-rank designs.
pub const GRAM_RIDGE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares {
    pub coefficients: DVector<f64>,
    /// Set when the design was rank deficient and the minimum-norm solution was used.
    pub rank_deficient: bool,
}

/// Numerical rank of `x` using the usual `σ_max · max(n, p) · ε` cutoff.
pub fn numerical_rank(x: &DMatrix<f64>) -> usize {
    let sv = x.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    let tol = top * x.nrows().max(x.ncols()) as f64 * f64::EPSILON;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Ordinary least squares via the normal equations, falling back to the
/// SVD minimum-norm solution when the design is rank deficient.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!(
            "design has {} rows but target has {}",
            x.nrows(),
            y.len()
        )));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::invalid("empty design matrix"));
    }
    if numerical_rank(x) == x.ncols() {
        let mut gram = x.transpose() * x;
        for i in 0..gram.nrows() {
            gram[(i, i)] += GRAM_RIDGE;
        }
        if let Some(chol) = gram.cholesky() {
            return Ok(LeastSquares {
                coefficients: chol.solve(&(x.transpose() * y)),
                rank_deficient: false,
            });
        }
    }
    let svd = x.clone().svd(true, true);
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = top * x.nrows().max(x.ncols()) as f64 * f64::EPSILON;
    let coefficients = svd
        .solve(y, tol)
        .map_err(|e| Error::Numerical(format!("minimum-norm solve failed: {e}")))?;
    Ok(LeastSquares {
        coefficients,
        rank_deficient: true,
    })
}
