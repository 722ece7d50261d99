//! Proximal operators for the L1 and nuclear norms.

use super::eigen::sym_eigen;
use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

/// Scalar shrinkage `sgn(x) * max(|x| - alpha, 0)`.
#[inline]
pub fn shrink(x: f64, alpha: f64) -> f64 {
    x.signum() * (x.abs() - alpha).max(0.0)
}

/// Elementwise soft-thresholding, the proximal operator of `alpha * ‖·‖₁`.
pub fn soft_threshold(m: &DenseMatrix, alpha: f64) -> Result<DenseMatrix> {
    check_weight(alpha, "alpha")?;
    Ok(m.map(|x| if x == 0.0 { 0.0 } else { shrink(x, alpha) }))
}

/// Proximal operator of `beta * ‖·‖_*` for a symmetric matrix.
///
/// With `m = Q Λ Qᵀ` the singular values are `|λᵢ|`, so shrinking them by
/// `beta` while keeping their signs gives `Q diag(sgn(λᵢ)(|λᵢ| - β)₊) Qᵀ`.
/// The result is symmetrised to remove round-off asymmetry.
pub fn prox_nuclear(m: &DenseMatrix, beta: f64) -> Result<DenseMatrix> {
    check_weight(beta, "beta")?;
    let eig = sym_eigen(m)?;
    let mut out = eig.reconstruct_with(|l| shrink(l, beta));
    out.symmetrize()?;
    Ok(out)
}

/// Sum of singular values of a symmetric matrix, `Σ |λᵢ|`.
pub fn nuclear_norm(m: &DenseMatrix) -> Result<f64> {
    Ok(sym_eigen(m)?.eigenvalues.iter().map(|l| l.abs()).sum())
}

fn check_weight(w: f64, name: &str) -> Result<()> {
    if !w.is_finite() || w < 0.0 {
        return Err(Error::invalid(format!(
            "{name} must be a finite nonnegative number, got {w}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_examples() {
        let m = DenseMatrix::from_rows(&[[0.5, -0.1], [-0.7, 0.2]]).unwrap();
        let out = soft_threshold(&m, 0.2).unwrap();
        assert!((out.get(0, 0) - 0.3).abs() < 1e-15);
        assert_eq!(out.get(0, 1), 0.0);
        assert!((out.get(1, 0) + 0.5).abs() < 1e-15);
        assert_eq!(out.get(1, 1), 0.0);
        assert_eq!(soft_threshold(&m, 0.0).unwrap(), m);
        assert!(soft_threshold(&m, -1.0).is_err());
    }

    #[test]
    fn prox_nuclear_examples() {
        let out = prox_nuclear(&DenseMatrix::identity(2), 0.3).unwrap();
        assert!(
            out.max_abs_diff(&DenseMatrix::identity(2).scale(0.7))
                .unwrap()
                < 1e-14
        );

        let m =
            DenseMatrix::from_rows(&[[0.2, 0.9, 0.0], [0.9, -0.4, 0.3], [0.0, 0.3, 1.0]]).unwrap();
        assert!(prox_nuclear(&m, 0.0).unwrap().max_abs_diff(&m).unwrap() < 1e-8);

        let small = DenseMatrix::from_rows(&[[0.1, 0.05], [0.05, -0.1]]).unwrap();
        assert!(prox_nuclear(&small, 0.5).unwrap().max_abs() < 1e-15);
        assert!(prox_nuclear(&m, -0.1).is_err());
    }

    #[test]
    fn nuclear_norm_of_diag() {
        assert!((nuclear_norm(&DenseMatrix::from_diag(&[2.0, -1.0])).unwrap() - 3.0).abs() < 1e-15);
    }
}
