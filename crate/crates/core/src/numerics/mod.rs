//! Dense linear algebra, the symmetric eigensolver and proximal operators.

mod eigen;
mod matrix;
mod prox;
pub mod tolerances;

pub use eigen::{sym_eigen, sym_eigenvalues, SymmetricEigen, MAX_SWEEPS};
pub(crate) use matrix::dot;
pub use matrix::DenseMatrix;
pub use prox::{nuclear_norm, prox_nuclear, shrink, soft_threshold};

use crate::error::Result;

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    a.matmul(b)
}

pub fn frobenius_norm(m: &DenseMatrix) -> f64 {
    m.frobenius_norm()
}

pub fn trace(m: &DenseMatrix) -> Result<f64> {
    m.trace()
}

pub fn l1_norm(m: &DenseMatrix) -> f64 {
    m.l1_norm()
}
