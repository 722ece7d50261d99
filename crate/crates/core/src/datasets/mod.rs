//! Dataset ingestion, synthetic generation and splits.

mod io;
mod sbm;
mod split;

pub use io::{
    features_csv, load_dataset, load_edge_list, load_features, load_graph, load_labels, save_graph,
    GraphMeta, LoadStats, EDGES_FILE, FEATURES_FILE, LABELS_FILE, META_FILE,
};
pub use sbm::{generate_sbm, label_features, SbmConfig};
pub use split::{make_split, SplitMask, SplitRatios};

use std::collections::VecDeque;

use crate::error::Result;
use crate::graph::Graph;
use crate::numerics::DenseMatrix;

/// Restricts `g` to its largest connected component. Returns the subgraph and
/// the original index of each kept node; ties go to the component containing
/// the smallest node index.
pub fn largest_connected_component(g: &Graph) -> Result<(Graph, Vec<usize>)> {
    let n = g.n();
    let a = g.adjacency();
    let mut component = vec![usize::MAX; n];
    let mut best: Vec<usize> = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let mut members = vec![start];
        component[start] = start;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for (v, &w) in a.row(u).iter().enumerate() {
                if w > 0.0 && component[v] == usize::MAX {
                    component[v] = start;
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        if members.len() > best.len() {
            best = members;
        }
    }
    best.sort_unstable();
    let keep = best;
    let sub = DenseMatrix::from_fn(keep.len(), keep.len(), |i, j| a.get(keep[i], keep[j]));
    let features = g
        .features()
        .map(|x| DenseMatrix::from_fn(keep.len(), x.cols(), |i, j| x.get(keep[i], j)));
    let labels = g.labels().map(|y| keep.iter().map(|&i| y[i]).collect());
    let graph = Graph::with_class_count(sub, features, labels, g.class_count())?;
    Ok((graph, keep))
}
