//! Text formats for graphs.
//!
//! * Edge list: one `u v` pair per line (0-indexed), optionally followed by a
//!   weight in `(0, 1]`. Blank lines and lines starting with `#` are ignored.
//! * Features: CSV without header, one row of reals per node.
//! * Labels: one nonnegative integer per line.
//!
//! The canonical directory layout written by [`save_graph`] is
//! `meta.json`, `edges.txt`, and optionally `features.csv` and `labels.txt`.
//! Reals are written in Rust's shortest round-trip representation, so a save
//! followed by a load reproduces every value bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::DenseMatrix;

pub const META_FILE: &str = "meta.json";
pub const EDGES_FILE: &str = "edges.txt";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.txt";
const FORMAT_VERSION: u32 = 1;

/// Counters describing what the edge-list reader discarded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadStats {
    pub self_loops_dropped: usize,
    pub duplicate_edges: usize,
}

/// Summary stored alongside a saved graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub format_version: u32,
    pub nodes: usize,
    pub edges: usize,
    pub features: Option<usize>,
    pub classes: usize,
    pub weighted: bool,
}

impl GraphMeta {
    pub fn of(g: &Graph) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            nodes: g.n(),
            edges: g.edge_count(),
            features: g.feature_dim(),
            classes: g.class_count(),
            weighted: !g.is_binary(),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads an undirected edge list into a graph on `n_hint` nodes (or
/// `max index + 1` when no hint is given).
///
/// Both orientations of a pair collapse into one edge and self-loops are
/// dropped; both are counted in the returned [`LoadStats`].
pub fn load_edge_list(path: &Path, n_hint: Option<usize>) -> Result<(Graph, LoadStats)> {
    let text = read(path)?;
    let mut triples = Vec::new();
    let mut max_index = None::<usize>;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let mut index = |name: &str| -> Result<usize> {
            let tok = parts
                .next()
                .ok_or_else(|| parse_err(path, lineno, format!("missing {name} endpoint")))?;
            tok.parse::<usize>()
                .map_err(|_| parse_err(path, lineno, format!("invalid node index {tok:?}")))
        };
        let u = index("first")?;
        let v = index("second")?;
        let w = match parts.next() {
            None => 1.0,
            Some(tok) => {
                let w: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("invalid weight {tok:?}")))?;
                if !(w > 0.0 && w <= 1.0) {
                    return Err(parse_err(
                        path,
                        lineno,
                        format!("weight {w} outside (0, 1]"),
                    ));
                }
                w
            }
        };
        if parts.next().is_some() {
            return Err(parse_err(path, lineno, "expected `u v` or `u v w`"));
        }
        if let Some(n) = n_hint {
            if u >= n || v >= n {
                return Err(Error::invalid(format!(
                    "{}:{lineno}: node index {} out of range for {n} nodes",
                    path.display(),
                    u.max(v)
                )));
            }
        }
        max_index = Some(max_index.map_or(u.max(v), |m| m.max(u).max(v)));
        triples.push((u, v, w));
    }

    let n = n_hint.unwrap_or_else(|| max_index.map_or(0, |m| m + 1));
    let mut a = DenseMatrix::zeros(n, n);
    let mut stats = LoadStats::default();
    for (u, v, w) in triples {
        if u == v {
            stats.self_loops_dropped += 1;
            continue;
        }
        if a.get(u, v) != 0.0 {
            stats.duplicate_edges += 1;
        }
        a.set(u, v, w);
        a.set(v, u, w);
    }
    if stats.self_loops_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loop(s)",
            path.display(),
            stats.self_loops_dropped
        );
    }
    Ok((Graph::new(a, None, None)?, stats))
}

pub fn load_features(path: &Path) -> Result<DenseMatrix> {
    let text = read(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        parse_err(path, lineno + 1, format!("invalid feature value {tok:?}"))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    lineno + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(lineno, l)| {
            l.trim()
                .parse::<usize>()
                .map_err(|_| parse_err(path, lineno + 1, format!("invalid label {:?}", l.trim())))
        })
        .collect()
}

/// Loads an edge list with optional feature and label sidecars. The node
/// count comes from the sidecars when present.
pub fn load_dataset(
    edges: &Path,
    features: Option<&Path>,
    labels: Option<&Path>,
) -> Result<(Graph, LoadStats)> {
    let x = features.map(load_features).transpose()?;
    let y = labels.map(load_labels).transpose()?;
    let n_hint = match (&x, &y) {
        (Some(x), Some(y)) if x.rows() != y.len() => {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                x.rows(),
                y.len()
            )))
        }
        (Some(x), _) => Some(x.rows()),
        (None, Some(y)) => Some(y.len()),
        (None, None) => None,
    };
    let (g, stats) = load_edge_list(edges, n_hint)?;
    let g = Graph::new(g.adjacency().clone(), x, y)?;
    Ok((g, stats))
}

fn write(path: PathBuf, contents: String) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `g` in the canonical directory layout, creating `dir` if needed.
pub fn save_graph(g: &Graph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = serde_json::to_string_pretty(&GraphMeta::of(g)).expect("meta serialises");
    write(dir.join(META_FILE), meta + "\n")?;

    let mut edges = String::new();
    let a = g.adjacency();
    for (i, j) in g.edges() {
        let w = a.get(i, j);
        if w == 1.0 {
            writeln!(edges, "{i} {j}").unwrap();
        } else {
            writeln!(edges, "{i} {j} {w}").unwrap();
        }
    }
    write(dir.join(EDGES_FILE), edges)?;

    if let Some(x) = g.features() {
        write(dir.join(FEATURES_FILE), features_csv(x))?;
    }
    if let Some(y) = g.labels() {
        let mut out = String::with_capacity(y.len() * 2);
        for c in y {
            writeln!(out, "{c}").unwrap();
        }
        write(dir.join(LABELS_FILE), out)?;
    }
    Ok(())
}

pub fn features_csv(x: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..x.rows() {
        for (j, v) in x.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Reads a graph written by [`save_graph`].
pub fn load_graph(dir: &Path) -> Result<Graph> {
    let meta_path = dir.join(META_FILE);
    let meta: GraphMeta = serde_json::from_str(&read(&meta_path)?)
        .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::invalid(format!(
            "{}: unsupported format version {}",
            meta_path.display(),
            meta.format_version
        )));
    }
    let (g, _) = load_edge_list(&dir.join(EDGES_FILE), Some(meta.nodes))?;
    let features_path = dir.join(FEATURES_FILE);
    let x = features_path
        .exists()
        .then(|| load_features(&features_path))
        .transpose()?;
    let labels_path = dir.join(LABELS_FILE);
    let y = labels_path
        .exists()
        .then(|| load_labels(&labels_path))
        .transpose()?;
    let classes = meta
        .classes
        .max(y.as_ref().and_then(|y| y.iter().max()).map_or(0, |m| m + 1));
    Graph::with_class_count(g.adjacency().clone(), x, y, classes)
}
