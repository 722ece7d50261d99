//! Central finite-difference checks of the analytic gradients.

use rand::Rng as _;

use crate::error::Result;
use crate::gcn::{gcn_backward, gcn_forward, masked_cross_entropy, GcnParams};
use crate::graph::Graph;
use crate::learner::{
    frozen_degrees, grad_structure_smooth, smooth_loss_frozen, LearnerConfig, Problem,
};
use crate::numerics::DenseMatrix;
use crate::rng::{seeded, Rng};

pub const STEP: f64 = 1e-5;

/// `‖a − b‖_F / max(‖a‖_F, ‖b‖_F)`, zero when both vanish.
pub fn relative_error(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    if scale == 0.0 {
        return 0.0;
    }
    a.sub(b).expect("same shape").frobenius_norm() / scale
}

/// Entrywise central differences of `f` at `at`.
pub fn central_difference(
    at: &DenseMatrix,
    h: f64,
    mut f: impl FnMut(&DenseMatrix) -> Result<f64>,
) -> Result<DenseMatrix> {
    let mut probe = at.clone();
    let mut out = DenseMatrix::zeros(at.rows(), at.cols());
    for i in 0..at.rows() {
        for j in 0..at.cols() {
            let v = at.get(i, j);
            probe.set(i, j, v + h);
            let up = f(&probe)?;
            probe.set(i, j, v - h);
            let down = f(&probe)?;
            probe.set(i, j, v);
            out.set(i, j, (up - down) / (2.0 * h));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GcnGradCheck {
    pub w1: f64,
    pub w2: f64,
    pub s_hat: f64,
}

impl GcnGradCheck {
    pub fn max(&self) -> f64 {
        self.w1.max(self.w2).max(self.s_hat)
    }
}

fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

fn random_structure(n: usize, rng: &mut Rng) -> DenseMatrix {
    let mut s = uniform(n, n, 0.0, 1.0, rng);
    for i in 0..n {
        s[(i, i)] = 0.0;
        for j in 0..i {
            s[(i, j)] = s.get(j, i);
        }
    }
    s
}

/// Random `n`-node instance: weighted structure, features, labels in three
/// classes and a training mask of every other node plus node 1.
fn instance(n: usize, seed: u64) -> (Graph, Vec<usize>, GcnParams, Rng) {
    let mut rng = seeded(seed, 0);
    let classes = 3;
    let s = random_structure(n, &mut rng);
    let x = uniform(n, 4, -1.0, 1.0, &mut rng);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let g = Graph::with_class_count(s, Some(x), Some(labels), classes).expect("valid instance");
    let mut mask: Vec<usize> = (0..n).step_by(2).collect();
    mask.push(1);
    let params = GcnParams::glorot(4, 5, classes, &mut rng);
    (g, mask, params, rng)
}

/// Compares the GCN backward pass with finite differences of the masked
/// cross-entropy on a random `n`-node instance.
pub fn check_gcn_gradients(n: usize, seed: u64) -> Result<GcnGradCheck> {
    let (g, mask, params, _) = instance(n, seed);
    let s_hat = g.normalized().matrix;
    let x = g.features().expect("instance has features");
    let labels = g.labels().expect("instance has labels");

    let out = gcn_forward(&s_hat, x, &params)?;
    let grads = gcn_backward(&out.cache, &params, &out.probabilities, labels, &mask, true)?;
    let loss = |s: &DenseMatrix, p: &GcnParams| -> Result<f64> {
        let out = gcn_forward(s, x, p)?;
        masked_cross_entropy(&out.probabilities, labels, &mask)
    };

    let fd_w1 = central_difference(params.w1(), STEP, |w1| {
        loss(&s_hat, &GcnParams::new(w1.clone(), params.w2().clone())?)
    })?;
    let fd_w2 = central_difference(params.w2(), STEP, |w2| {
        loss(&s_hat, &GcnParams::new(params.w1().clone(), w2.clone())?)
    })?;
    let fd_s = central_difference(&s_hat, STEP, |s| loss(s, &params))?;
    Ok(GcnGradCheck {
        w1: relative_error(&grads.w1, &fd_w1),
        w2: relative_error(&grads.w2, &fd_w2),
        s_hat: relative_error(grads.s_hat.as_ref().expect("requested"), &fd_s),
    })
}

/// Compares the structure gradient (degrees frozen) with finite differences
/// of the smooth part of the structure loss, perturbing `S` symmetrically.
pub fn check_structure_gradient(n: usize, seed: u64) -> Result<f64> {
    let (g, mask, params, mut rng) = instance(n, seed);
    let cfg = LearnerConfig {
        lambda: rng.gen_range(0.1..1.0),
        eta: vec![
            rng.gen_range(0.1..2.0),
            rng.gen_range(0.1..2.0),
            rng.gen_range(0.1..2.0),
        ],
        ..LearnerConfig::default()
    };
    // targets come from a different (binary) graph than the current iterate
    let a = {
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            let j = (i + 1) % n;
            a.set(i, j, 1.0);
            a.set(j, i, 1.0);
        }
        a
    };
    let poisoned = g.with_adjacency(a)?;
    let problem = Problem::new(&poisoned, 3, &mask)?;
    let s = g.adjacency().clone();

    let analytic = grad_structure_smooth(&s, &problem, &params, &cfg)?;
    let inv_sqrt = frozen_degrees(&s);
    let loss = |m: &DenseMatrix| smooth_loss_frozen(m, &inv_sqrt, &problem, &params, &cfg);

    let mut fd = DenseMatrix::zeros(n, n);
    let mut probe = s.clone();
    for i in 0..n {
        for j in i..n {
            let v = s.get(i, j);
            let mut eval = |delta: f64| {
                probe.set(i, j, v + delta);
                probe.set(j, i, v + delta);
                let l = loss(&probe);
                probe.set(i, j, v);
                probe.set(j, i, v);
                l
            };
            let d = (eval(STEP)? - eval(-STEP)?) / (2.0 * STEP);
            // a symmetric off-diagonal perturbation moves two entries
            let d = if i == j { d } else { d / 2.0 };
            fd.set(i, j, d);
            fd.set(j, i, d);
        }
    }
    Ok(relative_error(&analytic, &fd))
}
