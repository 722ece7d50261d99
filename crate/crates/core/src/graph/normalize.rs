use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::numerics::tolerances::SYMMETRY_TOL;
use crate::numerics::DenseMatrix;

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` together with the degrees `D̃ᵢᵢ = Σⱼ (A + I)ᵢⱼ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormalizedAdjacency {
    pub matrix: DenseMatrix,
    pub degree: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn n(&self) -> usize {
        self.degree.len()
    }

    /// `D̃^{-1/2}` as a vector.
    pub fn inv_sqrt_degree(&self) -> Vec<f64> {
        self.degree.iter().map(|d| 1.0 / d.sqrt()).collect()
    }
}

/// Normalises a symmetric nonnegative matrix after adding self-loops.
///
/// Stored diagonal entries are kept, so a zero-diagonal input gets exactly
/// one unit self-loop per node.
pub fn normalize_adjacency(a: &DenseMatrix) -> Result<NormalizedAdjacency> {
    check_weighted_adjacency(a)?;
    let n = a.rows();
    let mut tilde = a.clone();
    for i in 0..n {
        tilde[(i, i)] += 1.0;
    }
    let degree = tilde.row_sums();
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut matrix = tilde.scale_rows_cols(&inv_sqrt, &inv_sqrt)?;
    matrix.symmetrize()?;
    Ok(NormalizedAdjacency { matrix, degree })
}

impl Graph {
    pub fn normalized(&self) -> NormalizedAdjacency {
        normalize_adjacency(self.adjacency()).expect("graph adjacency is validated on construction")
    }
}

/// `L = D̃ − Ã` for a weighted symmetric matrix.
pub fn laplacian_of(a: &DenseMatrix) -> Result<DenseMatrix> {
    check_weighted_adjacency(a)?;
    let n = a.rows();
    let mut l = a.scale(-1.0);
    let degree = a.row_sums();
    for i in 0..n {
        // (dᵢ + 1) − (aᵢᵢ + 1)
        l[(i, i)] = degree[i] - a.get(i, i);
    }
    Ok(l)
}

/// Unnormalised Laplacian `L = D̃ − Ã` of a graph (the self-loops cancel).
pub fn graph_laplacian(g: &Graph) -> DenseMatrix {
    laplacian_of(g.adjacency()).expect("graph adjacency is validated on construction")
}

/// `L̂ = I − Â`.
pub fn normalized_laplacian(g: &Graph) -> DenseMatrix {
    let na = g.normalized();
    let n = g.n();
    let mut l = na.matrix.scale(-1.0);
    for i in 0..n {
        l[(i, i)] += 1.0;
    }
    l
}

/// `Âᵏ` by repeated multiplication.
pub fn normalized_power(na: &NormalizedAdjacency, k: usize) -> Result<DenseMatrix> {
    if k < 1 {
        return Err(Error::invalid("power k must be at least 1"));
    }
    let mut out = na.matrix.clone();
    for _ in 1..k {
        out = out.matmul(&na.matrix)?;
    }
    out.symmetrize()?;
    Ok(out)
}

fn check_weighted_adjacency(a: &DenseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::invalid(format!(
            "adjacency must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::invalid("adjacency must be symmetric"));
    }
    if let Some(w) = a.data().iter().find(|&&w| w < 0.0) {
        return Err(Error::invalid(format!("negative edge weight {w}")));
    }
    Ok(())
}
