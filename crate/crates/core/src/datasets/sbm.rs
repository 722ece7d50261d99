//! Stochastic block model graphs with label-determined features.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numerics::DenseMatrix;
use crate::rng::{seeded, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub n: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Feature noise strength `p ∈ (0, 1]`; `1` gives exact one-hot rows.
    pub noise_p: f64,
    /// Count the self-loop as a homophilous neighbour when checking the
    /// expected homophily.
    #[serde(default)]
    pub self_loop_homophily: bool,
    #[serde(default)]
    pub seed: u64,
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::invalid("SBM needs at least two classes"));
        }
        if self.n < self.classes {
            return Err(Error::invalid(format!(
                "{} nodes cannot fill {} classes",
                self.n, self.classes
            )));
        }
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return Err(Error::invalid(format!(
                "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if !(self.noise_p > 0.0 && self.noise_p <= 1.0) {
            return Err(Error::invalid(format!(
                "noise_p {} outside (0, 1]",
                self.noise_p
            )));
        }
        let h = self.expected_node_homophily();
        let floor = 1.0 / self.classes as f64;
        if h.is_nan() || h <= floor {
            return Err(Error::invalid(format!(
                "expected homophily {h:.4} does not exceed 1/C = {floor:.4}"
            )));
        }
        Ok(())
    }

    /// Class of node `i`: contiguous, near-equal blocks.
    pub fn label_of(&self, i: usize) -> usize {
        i * self.classes / self.n
    }

    fn block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.classes];
        for i in 0..self.n {
            sizes[self.label_of(i)] += 1;
        }
        sizes
    }

    /// Expected fraction of a node's neighbours sharing its class, averaged
    /// over blocks.
    pub fn expected_node_homophily(&self) -> f64 {
        let sizes = self.block_sizes();
        let loop_term = if self.self_loop_homophily { 1.0 } else { 0.0 };
        let mut total = 0.0;
        for &m in &sizes {
            let same = self.p_in * (m as f64 - 1.0) + loop_term;
            let other = self.p_out * (self.n - m) as f64;
            let h = if same + other > 0.0 {
                same / (same + other)
            } else {
                0.0
            };
            total += h * m as f64;
        }
        total / self.n as f64
    }

    /// Expected (same-class edges) / (all edges), with its delta-method
    /// standard deviation for a single draw.
    pub fn expected_edge_homophily(&self) -> (f64, f64) {
        let sizes = self.block_sizes();
        let intra: f64 = sizes
            .iter()
            .map(|&m| (m * m.saturating_sub(1) / 2) as f64)
            .sum();
        let total = (self.n * (self.n - 1) / 2) as f64;
        let inter = total - intra;
        let (mh, vh) = (self.p_in * intra, self.p_in * (1.0 - self.p_in) * intra);
        let (mt, vt) = (self.p_out * inter, self.p_out * (1.0 - self.p_out) * inter);
        let mean = mh / (mh + mt);
        let var = (mt * mt * vh + mh * mh * vt) / (mh + mt).powi(4);
        (mean, var.sqrt())
    }
}

/// `p · onehot(y) + (1 − p)/C · 1` for each label.
pub fn label_features(labels: &[usize], classes: usize, noise_p: f64) -> DenseMatrix {
    let base = (1.0 - noise_p) / classes as f64;
    DenseMatrix::from_fn(labels.len(), classes, |i, c| {
        if labels[i] == c {
            noise_p + base
        } else {
            base
        }
    })
}

pub fn generate_sbm(cfg: &SbmConfig) -> Result<Graph> {
    cfg.validate()?;
    let n = cfg.n;
    let labels: Vec<usize> = (0..n).map(|i| cfg.label_of(i)).collect();
    let mut rng = seeded(cfg.seed, streams::SBM);
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if rng.gen::<f64>() < p {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    let x = label_features(&labels, cfg.classes, cfg.noise_p);
    Graph::with_class_count(a, Some(x), Some(labels), cfg.classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::local_smoothness_all;

    fn cfg() -> SbmConfig {
        SbmConfig {
            n: 4,
            classes: 2,
            p_in: 1.0,
            p_out: 0.0,
            noise_p: 0.9,
            self_loop_homophily: false,
            seed: 7,
        }
    }

    #[test]
    fn disjoint_cliques_are_perfectly_smooth() {
        let g = generate_sbm(&cfg()).unwrap();
        assert_eq!(g.edges(), vec![(0, 1), (2, 3)]);
        assert!(local_smoothness_all(&g).unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn unit_noise_gives_one_hot_features() {
        let g = generate_sbm(&SbmConfig {
            noise_p: 1.0,
            ..cfg()
        })
        .unwrap();
        let x = g.features().unwrap();
        for i in 0..4 {
            let y = g.labels().unwrap()[i];
            for c in 0..2 {
                assert_eq!(x.get(i, c), if c == y { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn heterophilous_feature_distance() {
        let p = 0.35;
        let x = label_features(&[0, 1, 2], 3, p);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let d: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            assert!((d - 2.0 * p * p).abs() < 1e-15);
        }
    }

    #[test]
    fn validation() {
        assert!(generate_sbm(&SbmConfig {
            p_out: 0.5,
            p_in: 0.5,
            ..cfg()
        })
        .is_err());
        assert!(generate_sbm(&SbmConfig {
            noise_p: 0.0,
            ..cfg()
        })
        .is_err());
        assert!(generate_sbm(&SbmConfig {
            classes: 1,
            ..cfg()
        })
        .is_err());
        // heterophilous in expectation: h = 0.9 / (0.9 + 0.95) < 0.5
        let bad = SbmConfig {
            n: 20,
            classes: 2,
            p_in: 0.1,
            p_out: 0.095,
            ..cfg()
        };
        assert!(generate_sbm(&bad).is_err());
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let c = SbmConfig {
            n: 60,
            classes: 3,
            p_in: 0.3,
            p_out: 0.02,
            ..cfg()
        };
        assert_eq!(generate_sbm(&c).unwrap(), generate_sbm(&c).unwrap());
        let other = generate_sbm(&SbmConfig {
            seed: 8,
            ..c.clone()
        })
        .unwrap();
        assert_ne!(generate_sbm(&c).unwrap(), other);
    }
}
