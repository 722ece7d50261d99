//! Feature smoothness of a graph signal.
//!
//! With `Ã = A + I`, the global smoothness is
//! `s = Σᵢⱼ Ãᵢⱼ ‖xᵢ − xⱼ‖² / ‖Ã‖₁` and the local smoothness of node `i` is
//! `sᵢ = Σⱼ Ãᵢⱼ ‖xᵢ − xⱼ‖² / d̃ᵢ`. Self-loop terms contribute zero to the sums
//! but count in the normalisers. Since the double sum runs over ordered
//! pairs it equals `2 tr(XᵀLX)`, which is the identity the trace-form route
//! relies on.

use serde::{Deserialize, Serialize};

use super::normalize::{laplacian_of, normalize_adjacency};
use super::Graph;
use crate::error::{Error, Result};
use crate::numerics::{dot, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub global: f64,
    pub per_node: Vec<f64>,
    pub perturbation_rate: f64,
}

fn features(g: &Graph) -> Result<&DenseMatrix> {
    g.features()
        .ok_or_else(|| Error::invalid("feature smoothness needs node features"))
}

fn adjacency<'a>(
    g: &'a Graph,
    adjacency_override: Option<&'a DenseMatrix>,
) -> Result<&'a DenseMatrix> {
    match adjacency_override {
        Some(a) if a.shape() != g.adjacency().shape() => Err(Error::DimensionMismatch {
            op: "feature_smoothness",
            left: a.shape(),
            right: g.adjacency().shape(),
        }),
        Some(a) => Ok(a),
        None => Ok(g.adjacency()),
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Global smoothness by the double sum over node pairs.
///
/// `adjacency_override` substitutes another (possibly weighted) structure for
/// the graph's own adjacency, e.g. a learned one.
pub fn feature_smoothness(g: &Graph, adjacency_override: Option<&DenseMatrix>) -> Result<f64> {
    let x = features(g)?;
    let a = adjacency(g, adjacency_override)?;
    let n = g.n();
    let mut total = 0.0;
    for i in 0..n {
        for (j, &w) in a.row(i).iter().enumerate() {
            if w != 0.0 && i != j {
                total += w * squared_distance(x.row(i), x.row(j));
            }
        }
    }
    Ok(if n > 0 { total / tilde_l1(a) } else { 0.0 })
}

/// `‖A + I‖₁`.
fn tilde_l1(a: &DenseMatrix) -> f64 {
    let diag_shift: f64 = a
        .diagonal()
        .iter()
        .map(|&d| (d + 1.0).abs() - d.abs())
        .sum();
    a.l1_norm() + diag_shift
}

/// Global smoothness by the trace route `2 tr(XᵀLX) / ‖Ã‖₁`.
pub fn feature_smoothness_trace_form(
    g: &Graph,
    adjacency_override: Option<&DenseMatrix>,
) -> Result<f64> {
    let x = features(g)?;
    let a = adjacency(g, adjacency_override)?;
    let l = laplacian_of(a)?;
    let lx = l.matmul(x)?;
    let quad: f64 = (0..g.n()).map(|i| dot(x.row(i), lx.row(i))).sum();
    Ok(if g.n() > 0 {
        2.0 * quad / tilde_l1(a)
    } else {
        0.0
    })
}

/// `tr(Xᵀ(I − Â)X)` with `Â` the normalised form of a weighted structure.
pub fn normalized_laplacian_form(a: &DenseMatrix, x: &DenseMatrix) -> Result<f64> {
    if a.rows() != x.rows() {
        return Err(Error::DimensionMismatch {
            op: "normalized_laplacian_form",
            left: a.shape(),
            right: x.shape(),
        });
    }
    let a_hat = normalize_adjacency(a)?.matrix;
    let ax = a_hat.matmul(x)?;
    let total: f64 = (0..x.rows())
        .map(|i| dot(x.row(i), x.row(i)) - dot(x.row(i), ax.row(i)))
        .sum();
    Ok(total)
}

/// Local smoothness `sᵢ` of node `i`.
pub fn local_smoothness(g: &Graph, i: usize) -> Result<f64> {
    if i >= g.n() {
        return Err(Error::invalid(format!(
            "node {i} out of range for {} nodes",
            g.n()
        )));
    }
    let x = features(g)?;
    Ok(local_at(g.adjacency(), x, i))
}

pub fn local_smoothness_all(g: &Graph) -> Result<Vec<f64>> {
    let x = features(g)?;
    Ok((0..g.n()).map(|i| local_at(g.adjacency(), x, i)).collect())
}

fn local_at(a: &DenseMatrix, x: &DenseMatrix, i: usize) -> f64 {
    let mut total = 0.0;
    let mut degree = 1.0;
    for (j, &w) in a.row(i).iter().enumerate() {
        if w != 0.0 && j != i {
            total += w * squared_distance(x.row(i), x.row(j));
            degree += w;
        }
    }
    total / degree
}

pub fn smoothness_report(g: &Graph, perturbation_rate: f64) -> Result<SmoothnessReport> {
    Ok(SmoothnessReport {
        global: feature_smoothness(g, None)?,
        per_node: local_smoothness_all(g)?,
        perturbation_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_features(g: Graph, x: Vec<Vec<f64>>) -> Graph {
        g.with_features(Some(DenseMatrix::from_rows(&x).unwrap()))
            .unwrap()
    }

    #[test]
    fn identical_features_are_perfectly_smooth() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let g = with_features(g, vec![vec![0.3, 0.7]; 4]);
        assert_eq!(feature_smoothness(&g, None).unwrap(), 0.0);
        assert!(local_smoothness_all(&g).unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn single_edge_unit_vectors() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let g = with_features(g, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!((feature_smoothness(&g, None).unwrap() - 1.0).abs() < 1e-15);
        assert!((feature_smoothness_trace_form(&g, None).unwrap() - 1.0).abs() < 1e-15);
        // node 0: one neighbour at distance² 2, d̃ = 2
        assert!((local_smoothness(&g, 0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_homogeneity() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let x = vec![vec![0.1, 0.4], vec![0.9, -0.2], vec![0.3, 0.3]];
        let doubled: Vec<Vec<f64>> = x
            .iter()
            .map(|r| r.iter().map(|v| 2.0 * v).collect())
            .collect();
        let s1 = feature_smoothness(&with_features(g.clone(), x), None).unwrap();
        let s2 = feature_smoothness(&with_features(g, doubled), None).unwrap();
        assert!((s2 - 4.0 * s1).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        assert!(feature_smoothness(&g, None).is_err());
        let g = with_features(g, vec![vec![1.0], vec![0.0]]);
        assert!(local_smoothness(&g, 2).is_err());
        assert!(feature_smoothness(&g, Some(&DenseMatrix::zeros(3, 3))).is_err());
    }
}
