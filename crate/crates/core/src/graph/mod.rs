//! Undirected weighted graphs with optional node features and labels.

mod normalize;
mod smoothness;
mod spectral;

pub use normalize::{
    graph_laplacian, laplacian_of, normalize_adjacency, normalized_laplacian, normalized_power,
    NormalizedAdjacency,
};
pub use smoothness::{
    feature_smoothness, feature_smoothness_trace_form, local_smoothness, local_smoothness_all,
    normalized_laplacian_form, smoothness_report, SmoothnessReport,
};
pub use spectral::{spectral_check, trace_gap, SpectralReport, TraceGapReport};

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tolerances::GRAPH_SYMMETRY_TOL;
use crate::numerics::DenseMatrix;

/// An undirected graph on `n` nodes.
///
/// The adjacency is symmetric with weights in `[0, 1]` and an exactly zero
/// diagonal; self-loops are only ever introduced by normalisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    adjacency: DenseMatrix,
    features: Option<DenseMatrix>,
    labels: Option<Vec<usize>>,
    class_count: usize,
}

impl Graph {
    /// Validates and wraps the parts of a graph. `class_count` is inferred as
    /// `max(label) + 1` when labels are present.
    pub fn new(
        adjacency: DenseMatrix,
        features: Option<DenseMatrix>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let class_count = labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |&m| m + 1);
        Self::with_class_count(adjacency, features, labels, class_count)
    }

    pub fn with_class_count(
        adjacency: DenseMatrix,
        features: Option<DenseMatrix>,
        labels: Option<Vec<usize>>,
        class_count: usize,
    ) -> Result<Self> {
        validate_adjacency(&adjacency)?;
        let n = adjacency.rows();
        if let Some(x) = &features {
            if x.rows() != n {
                return Err(Error::invalid(format!(
                    "feature matrix has {} rows for {n} nodes",
                    x.rows()
                )));
            }
        }
        if let Some(y) = &labels {
            if y.len() != n {
                return Err(Error::invalid(format!("{} labels for {n} nodes", y.len())));
            }
            if let Some(&bad) = y.iter().find(|&&c| c >= class_count) {
                return Err(Error::invalid(format!(
                    "label {bad} outside [0, {class_count})"
                )));
            }
        }
        Ok(Self {
            adjacency,
            features,
            labels,
            class_count,
        })
    }

    /// Unweighted graph from an undirected edge list; duplicates collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = DenseMatrix::zeros(n, n);
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop at node {u}")));
            }
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        Self::new(a, None, None)
    }

    pub fn n(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &DenseMatrix {
        &self.adjacency
    }

    pub fn features(&self) -> Option<&DenseMatrix> {
        self.features.as_ref()
    }

    /// Node features, or the identity when the graph carries none.
    pub fn features_or_identity(&self) -> Cow<'_, DenseMatrix> {
        match &self.features {
            Some(x) => Cow::Borrowed(x),
            None => Cow::Owned(DenseMatrix::identity(self.n())),
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(|x| x.cols())
    }

    /// Replaces the adjacency, keeping features and labels.
    pub fn with_adjacency(&self, adjacency: DenseMatrix) -> Result<Self> {
        if adjacency.shape() != self.adjacency.shape() {
            return Err(Error::DimensionMismatch {
                op: "with_adjacency",
                left: adjacency.shape(),
                right: self.adjacency.shape(),
            });
        }
        validate_adjacency(&adjacency)?;
        Ok(Self {
            adjacency,
            ..self.clone()
        })
    }

    pub fn with_features(mut self, features: Option<DenseMatrix>) -> Result<Self> {
        if let Some(x) = &features {
            if x.rows() != self.n() {
                return Err(Error::invalid(format!(
                    "feature matrix has {} rows for {} nodes",
                    x.rows(),
                    self.n()
                )));
            }
        }
        self.features = features;
        Ok(self)
    }

    /// Number of undirected edges (pairs `i < j` with nonzero weight).
    pub fn edge_count(&self) -> usize {
        let n = self.n();
        (0..n)
            .map(|i| {
                self.adjacency.row(i)[i + 1..]
                    .iter()
                    .filter(|&&w| w > 0.0)
                    .count()
            })
            .sum()
    }

    /// Undirected edges as `(i, j)` with `i < j`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for (j, &w) in self.adjacency.row(i).iter().enumerate().skip(i + 1) {
                if w > 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency.get(i, j) > 0.0
    }

    /// Weighted degree without the self-loop.
    pub fn degree(&self, i: usize) -> f64 {
        self.adjacency.row(i).iter().sum()
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.adjacency.row_sums()
    }

    pub fn is_binary(&self) -> bool {
        self.adjacency.data().iter().all(|&w| w == 0.0 || w == 1.0)
    }

    /// Fraction of edges (by weight) joining nodes of the same class.
    pub fn edge_homophily(&self) -> Option<f64> {
        let y = self.labels()?;
        let n = self.n();
        let (mut same, mut total) = (0.0, 0.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.adjacency.get(i, j);
                if w > 0.0 {
                    total += w;
                    if y[i] == y[j] {
                        same += w;
                    }
                }
            }
        }
        (total > 0.0).then(|| same / total)
    }
}

fn validate_adjacency(a: &DenseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::invalid(format!(
            "adjacency must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let asym = a.asymmetry();
    if asym > GRAPH_SYMMETRY_TOL {
        return Err(Error::invalid(format!(
            "adjacency is not symmetric (asymmetry {asym:e})"
        )));
    }
    if let Some(w) = a.data().iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::invalid(format!(
            "adjacency weight {w} outside [0, 1]"
        )));
    }
    if let Some(i) = (0..a.rows()).find(|&i| a.get(i, i) != 0.0) {
        return Err(Error::invalid(format!(
            "adjacency has a stored self-loop at node {i}"
        )));
    }
    Ok(())
}
