//! Two-layer GCN, `softmax(Ŝ · relu(Ŝ X W₁) · W₂)`, with hand-written
//! backpropagation.
//!
//! The propagation matrix `Ŝ` is an arbitrary dense (possibly weighted)
//! matrix, normally a normalised adjacency. The backward pass can also return
//! the gradient with respect to `Ŝ`, accumulated over both layers.

mod checkpoint;
mod train;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::rng::Rng;

pub use checkpoint::{load_params, save_params, CheckpointFormat};
pub use train::{
    accuracy, train_gcn, Adam, EpochRecord, Optimizer, TrainConfig, TrainResult, Trainer,
};

/// Clamp applied inside the logarithm of the cross-entropy.
pub const LOG_CLAMP: f64 = 1e-12;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

/// Weights `W₁ ∈ ℝ^{F×H}` and `W₂ ∈ ℝ^{H×C}`.
///
/// Every mutation bumps a revision counter so caches from earlier forward
/// passes can be recognised as stale.
#[derive(Debug, Serialize, Deserialize)]
pub struct GcnParams {
    w1: DenseMatrix,
    w2: DenseMatrix,
    #[serde(skip, default = "fresh_id")]
    id: u64,
    #[serde(skip)]
    revision: u64,
}

impl Clone for GcnParams {
    fn clone(&self) -> Self {
        Self {
            w1: self.w1.clone(),
            w2: self.w2.clone(),
            id: fresh_id(),
            revision: 0,
        }
    }
}

impl PartialEq for GcnParams {
    fn eq(&self, other: &Self) -> bool {
        self.w1 == other.w1 && self.w2 == other.w2
    }
}

impl GcnParams {
    pub fn new(w1: DenseMatrix, w2: DenseMatrix) -> Result<Self> {
        if w1.cols() != w2.rows() {
            return Err(Error::DimensionMismatch {
                op: "GcnParams::new",
                left: w1.shape(),
                right: w2.shape(),
            });
        }
        if !w1.all_finite() || !w2.all_finite() {
            return Err(Error::invalid("GCN weights must be finite"));
        }
        Ok(Self {
            w1,
            w2,
            id: fresh_id(),
            revision: 0,
        })
    }

    /// Glorot-uniform initialisation.
    pub fn glorot(features: usize, hidden: usize, classes: usize, rng: &mut Rng) -> Self {
        let mut init = |r: usize, c: usize| {
            let bound = (6.0 / (r + c) as f64).sqrt();
            DenseMatrix::from_fn(r, c, |_, _| rng.gen_range(-bound..=bound))
        };
        let w1 = init(features, hidden);
        let w2 = init(hidden, classes);
        Self::new(w1, w2).expect("shapes agree by construction")
    }

    pub fn w1(&self) -> &DenseMatrix {
        &self.w1
    }

    pub fn w2(&self) -> &DenseMatrix {
        &self.w2
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn features(&self) -> usize {
        self.w1.rows()
    }

    pub fn classes(&self) -> usize {
        self.w2.cols()
    }

    /// Mutable access to both weights; invalidates outstanding caches.
    pub fn weights_mut(&mut self) -> (&mut DenseMatrix, &mut DenseMatrix) {
        self.revision += 1;
        (&mut self.w1, &mut self.w2)
    }

    pub fn all_finite(&self) -> bool {
        self.w1.all_finite() && self.w2.all_finite()
    }
}

/// Intermediates of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    s_hat: DenseMatrix,
    x: DenseMatrix,
    /// `X W₁`
    t1: DenseMatrix,
    /// `Ŝ X W₁`
    z1: DenseMatrix,
    /// `relu(z1)` after dropout
    h: DenseMatrix,
    /// Dropout multipliers (0 or `1/(1−p)`), absent without dropout.
    mask: Option<DenseMatrix>,
    /// `h W₂`
    t2: DenseMatrix,
    params_id: u64,
    params_revision: u64,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: DenseMatrix,
    pub probabilities: DenseMatrix,
    pub cache: ForwardCache,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
    /// `∂ℒ/∂Ŝ`, present when requested.
    pub s_hat: Option<DenseMatrix>,
}

fn check_shapes(s_hat: &DenseMatrix, x: &DenseMatrix, params: &GcnParams) -> Result<()> {
    if !s_hat.is_square() || s_hat.rows() != x.rows() {
        return Err(Error::DimensionMismatch {
            op: "gcn_forward (Ŝ vs X)",
            left: s_hat.shape(),
            right: x.shape(),
        });
    }
    if x.cols() != params.features() {
        return Err(Error::DimensionMismatch {
            op: "gcn_forward (X vs W₁)",
            left: x.shape(),
            right: params.w1.shape(),
        });
    }
    Ok(())
}

/// Inference-mode forward pass.
pub fn gcn_forward(
    s_hat: &DenseMatrix,
    x: &DenseMatrix,
    params: &GcnParams,
) -> Result<ForwardOutput> {
    forward_impl(s_hat, x, params, None)
}

/// Training-mode forward pass with inverted dropout on the hidden layer.
pub fn gcn_forward_dropout(
    s_hat: &DenseMatrix,
    x: &DenseMatrix,
    params: &GcnParams,
    dropout: f64,
    rng: &mut Rng,
) -> Result<ForwardOutput> {
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::invalid(format!("dropout {dropout} outside [0, 1)")));
    }
    forward_impl(s_hat, x, params, (dropout > 0.0).then_some((dropout, rng)))
}

fn forward_impl(
    s_hat: &DenseMatrix,
    x: &DenseMatrix,
    params: &GcnParams,
    dropout: Option<(f64, &mut Rng)>,
) -> Result<ForwardOutput> {
    check_shapes(s_hat, x, params)?;
    let t1 = x.matmul(&params.w1)?;
    let z1 = s_hat.matmul(&t1)?;
    let mut h = z1.map(|v| v.max(0.0));
    let mask = dropout.map(|(p, rng)| {
        let keep = 1.0 / (1.0 - p);
        let m = DenseMatrix::from_fn(h.rows(), h.cols(), |_, _| {
            if rng.gen::<f64>() < p {
                0.0
            } else {
                keep
            }
        });
        h = h.hadamard(&m).expect("same shape");
        m
    });
    let t2 = h.matmul(&params.w2)?;
    let logits = s_hat.matmul(&t2)?;
    let probabilities = softmax_rows(&logits);
    Ok(ForwardOutput {
        logits,
        probabilities,
        cache: ForwardCache {
            s_hat: s_hat.clone(),
            x: x.clone(),
            t1,
            z1,
            h,
            mask,
            t2,
            params_id: params.id,
            params_revision: params.revision,
        },
    })
}

pub fn softmax_rows(logits: &DenseMatrix) -> DenseMatrix {
    let mut p = logits.clone();
    for i in 0..p.rows() {
        let row = p.row_mut(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    p
}

fn check_mask(labels: &[usize], mask: &[usize], probabilities: &DenseMatrix) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::invalid("cross-entropy mask is empty"));
    }
    if labels.len() != probabilities.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} rows",
            labels.len(),
            probabilities.rows()
        )));
    }
    for &i in mask {
        if i >= labels.len() {
            return Err(Error::invalid(format!("mask index {i} out of range")));
        }
        if labels[i] >= probabilities.cols() {
            return Err(Error::invalid(format!(
                "label {} of node {i} exceeds {} classes",
                labels[i],
                probabilities.cols()
            )));
        }
    }
    Ok(())
}

/// Mean of `−ln p[yᵢ]` over the masked nodes.
pub fn masked_cross_entropy(
    probabilities: &DenseMatrix,
    labels: &[usize],
    mask: &[usize],
) -> Result<f64> {
    check_mask(labels, mask, probabilities)?;
    let total: f64 = mask
        .iter()
        .map(|&i| -probabilities.get(i, labels[i]).max(LOG_CLAMP).ln())
        .sum();
    Ok(total / mask.len() as f64)
}

/// Gradients of the masked cross-entropy of the pass that produced `cache`.
///
/// `params` must be the exact parameter object, unmodified, that was used in
/// that pass. The `Ŝ` gradient costs two extra `N×N×width` products and is
/// only formed when `want_s_hat` is set.
pub fn gcn_backward(
    cache: &ForwardCache,
    params: &GcnParams,
    probabilities: &DenseMatrix,
    labels: &[usize],
    mask: &[usize],
    want_s_hat: bool,
) -> Result<Gradients> {
    if cache.params_id != params.id || cache.params_revision != params.revision {
        return Err(Error::invalid(
            "stale forward cache: parameters changed since the forward pass",
        ));
    }
    if probabilities.shape() != (cache.s_hat.rows(), params.classes()) {
        return Err(Error::DimensionMismatch {
            op: "gcn_backward",
            left: probabilities.shape(),
            right: (cache.s_hat.rows(), params.classes()),
        });
    }
    check_mask(labels, mask, probabilities)?;

    let n = cache.s_hat.rows();
    let c = params.classes();
    let m = mask.len() as f64;
    let mut dz2 = DenseMatrix::zeros(n, c);
    for &i in mask {
        for k in 0..c {
            let target = if labels[i] == k { 1.0 } else { 0.0 };
            dz2[(i, k)] += (probabilities.get(i, k) - target) / m;
        }
    }

    let s = &cache.s_hat;
    // second layer: z2 = Ŝ t2, t2 = h W₂
    let dt2 = s.t_matmul(&dz2)?;
    let grad_w2 = cache.h.t_matmul(&dt2)?;
    let mut dh = dt2.matmul_t(&params.w2)?;
    if let Some(mask) = &cache.mask {
        dh = dh.hadamard(mask)?;
    }
    // first layer: h = relu(z1), z1 = Ŝ t1, t1 = X W₁
    let dz1 = dh.zip_map(
        &cache.z1,
        "relu backward",
        |g, z| if z > 0.0 { g } else { 0.0 },
    )?;
    let dt1 = s.t_matmul(&dz1)?;
    let grad_w1 = cache.x.t_matmul(&dt1)?;

    let grad_s = if want_s_hat {
        let mut g = dz2.matmul_t(&cache.t2)?;
        g.axpy(1.0, &dz1.matmul_t(&cache.t1)?)?;
        Some(g)
    } else {
        None
    };
    Ok(Gradients {
        w1: grad_w1,
        w2: grad_w2,
        s_hat: grad_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn rand_matrix(r: usize, c: usize, rng: &mut Rng) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn zero_first_layer_gives_uniform_output() {
        let mut rng = seeded(0, 0);
        let params = GcnParams::new(DenseMatrix::zeros(3, 4), rand_matrix(4, 5, &mut rng)).unwrap();
        let x = rand_matrix(6, 3, &mut rng);
        let out = gcn_forward(&DenseMatrix::identity(6), &x, &params).unwrap();
        for v in out.probabilities.data() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn single_node_composition() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let w1 = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let w2 = DenseMatrix::from_rows(&[[0.5, -1.0], [0.25, 3.0]]).unwrap();
        let params = GcnParams::new(w1, w2).unwrap();
        let out = gcn_forward(&DenseMatrix::identity(1), &x, &params).unwrap();
        assert_eq!(out.logits.row(0), &[1.0, 5.0]);
    }

    #[test]
    fn probabilities_are_normalised() {
        let mut rng = seeded(1, 0);
        let params = GcnParams::glorot(4, 8, 3, &mut rng);
        let x = rand_matrix(10, 4, &mut rng);
        let s = rand_matrix(10, 10, &mut rng);
        let out = gcn_forward(&s, &x, &params).unwrap();
        for i in 0..10 {
            assert!((out.probabilities.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = DenseMatrix::from_fn(3, 7, |_, _| 1.0 / 7.0);
        let l = masked_cross_entropy(&uniform, &[0, 3, 6], &[0, 1, 2]).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-12);
        let perfect = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(
            masked_cross_entropy(&perfect, &[0, 1], &[1, 0]).unwrap(),
            0.0
        );
        assert!(masked_cross_entropy(&perfect, &[0, 1], &[]).is_err());
        // a zero probability is clamped rather than infinite
        let l = masked_cross_entropy(&perfect, &[1, 0], &[0]).unwrap();
        assert!((l + LOG_CLAMP.ln()).abs() < 1e-9);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = seeded(2, 0);
        let mut params = GcnParams::glorot(2, 3, 2, &mut rng);
        let x = rand_matrix(4, 2, &mut rng);
        let s = DenseMatrix::identity(4);
        let out = gcn_forward(&s, &x, &params).unwrap();
        let labels = [0, 1, 0, 1];
        assert!(gcn_backward(
            &out.cache,
            &params,
            &out.probabilities,
            &labels,
            &[0, 1],
            false
        )
        .is_ok());
        let other = params.clone();
        assert!(gcn_backward(
            &out.cache,
            &other,
            &out.probabilities,
            &labels,
            &[0, 1],
            false
        )
        .is_err());
        params.weights_mut().0[(0, 0)] += 1.0;
        assert!(gcn_backward(
            &out.cache,
            &params,
            &out.probabilities,
            &labels,
            &[0, 1],
            false
        )
        .is_err());
    }

    #[test]
    fn shape_errors() {
        let mut rng = seeded(3, 0);
        let params = GcnParams::glorot(2, 3, 2, &mut rng);
        let x = rand_matrix(4, 3, &mut rng);
        assert!(gcn_forward(&DenseMatrix::identity(4), &x, &params).is_err());
        let x = rand_matrix(4, 2, &mut rng);
        assert!(gcn_forward(&DenseMatrix::identity(5), &x, &params).is_err());
        assert!(GcnParams::new(DenseMatrix::zeros(2, 3), DenseMatrix::zeros(2, 2)).is_err());
    }
}
