//! Small dense symmetric solves.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

/// Largest eigenvalue ratio accepted before a symmetric matrix counts as singular.
pub const MAX_CONDITION: f64 = 1e10;

/// Cholesky factor of a symmetric positive-definite matrix that passed the
/// condition check.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    /// Factor `a`, returning `None` when it is not positive definite or its
    /// condition number exceeds [`MAX_CONDITION`].
    pub fn new(a: &DMatrix<f64>) -> Option<Self> {
        if a.nrows() == 0 || a.nrows() != a.ncols() {
            return None;
        }
        if !is_well_conditioned(a) {
            return None;
        }
        Cholesky::new(a.clone()).map(|chol| Self { chol })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Upper-triangular `R` with `RᵀR = ΦᵀΦ + λI`, from a QR factorization of
/// `Φ` stacked on `√λ I`. Working with `R` instead of the Gram matrix keeps
/// the conditioning at that of `Φ`.
pub fn design_r(design: &DMatrix<f64>, ridge: f64) -> DMatrix<f64> {
    let (k, m) = design.shape();
    let mut stacked = DMatrix::zeros(k + m, m);
    stacked.rows_mut(0, k).copy_from(design);
    for j in 0..m {
        stacked[(k + j, j)] = ridge.sqrt();
    }
    stacked.qr().r()
}

fn is_well_conditioned(a: &DMatrix<f64>) -> bool {
    if a.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    max > 0.0 && min > 0.0 && max / min <= MAX_CONDITION
}
