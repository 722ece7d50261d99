//! High-order structure learning by alternating proximal optimisation.
//!
//! The learned structure `S` minimises
//!
//! ```text
//! α‖S‖₁ + β‖S‖_* + Σₖ ηₖ‖Ŝ − Âᵏ‖_F² + λ tr(Xᵀ(I − Ŝ)X) + ℒ_GNN
//! ```
//!
//! where `Ŝ` is the normalised form of `S` and `Âᵏ` are powers of the
//! normalised poisoned adjacency, computed once. Each outer iteration takes a
//! gradient step on the differentiable terms (degrees held fixed within the
//! step), applies the nuclear prox, then the L1 prox, projects onto `[0, 1]`
//! with a zero diagonal and symmetrises, and finally runs `τ` GCN parameter
//! steps on the updated structure.

use serde::{Deserialize, Serialize};

use crate::datasets::SplitMask;
use crate::error::{Error, Result};
use crate::gcn::{
    accuracy, gcn_backward, gcn_forward, masked_cross_entropy, GcnParams, TrainConfig, Trainer,
};
use crate::graph::{normalize_adjacency, normalized_power, Graph};
use crate::numerics::{nuclear_norm, prox_nuclear, soft_threshold, DenseMatrix};

/// Largest supported fidelity order `K`.
pub const MAX_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    /// `η₁..η_K`; its length is the order `K`.
    pub eta: Vec<f64>,
    /// Weight of the classification loss in the structure objective.
    pub gnn_weight: f64,
    pub tau: usize,
    pub lr_s: f64,
    pub outer_iters: usize,
    pub patience: usize,
    /// Record every loss component (including the nuclear norm, which costs
    /// an extra eigendecomposition) at each iteration.
    pub trace_loss: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 5e-4,
            beta: 1.5,
            lambda: 1e-3,
            eta: vec![1.0, 1.0, 1.0],
            gnn_weight: 1.0,
            tau: 1,
            lr_s: 1e-2,
            outer_iters: 400,
            patience: 50,
            trace_loss: false,
        }
    }
}

impl LearnerConfig {
    pub fn order(&self) -> usize {
        self.eta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v >= 0.0 && v.is_finite();
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lambda", self.lambda),
            ("gnn_weight", self.gnn_weight),
        ] {
            if !finite_nonneg(v) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.eta.is_empty() || self.eta.len() > MAX_ORDER {
            return Err(Error::invalid(format!(
                "order K = {} must be between 1 and {MAX_ORDER}",
                self.eta.len()
            )));
        }
        if let Some(v) = self.eta.iter().find(|&&v| !finite_nonneg(v)) {
            return Err(Error::invalid(format!("eta weights must be >= 0, got {v}")));
        }
        if self.tau == 0 {
            return Err(Error::invalid("tau must be at least 1"));
        }
        if !(self.lr_s > 0.0 && self.lr_s.is_finite()) {
            return Err(Error::invalid(format!(
                "lr_s must be positive, got {}",
                self.lr_s
            )));
        }
        Ok(())
    }
}

/// Prox weights scaled by the step size.
pub fn scaled_prox_weights(cfg: &LearnerConfig, lr_s: f64) -> Result<(f64, f64)> {
    if lr_s.is_nan() || lr_s <= 0.0 {
        return Err(Error::invalid(format!("lr_s must be positive, got {lr_s}")));
    }
    Ok((cfg.alpha * lr_s, cfg.beta * lr_s))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub l1: f64,
    pub nuclear: f64,
    /// `ηₖ‖Ŝ − Âᵏ‖_F²` for `k = 1..K`.
    pub fidelity: Vec<f64>,
    pub smooth: f64,
    pub gnn: f64,
    pub total: f64,
}

/// Fixed data of one structure-learning problem.
#[derive(Debug, Clone)]
pub struct Problem {
    /// `Â, Â², …, Â^K` of the poisoned graph.
    pub targets: Vec<DenseMatrix>,
    pub x: DenseMatrix,
    /// `X Xᵀ`, needed by the smoothness gradient.
    gram: DenseMatrix,
    /// `‖X‖_F²`
    x_norm2: f64,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub train: Vec<usize>,
}

impl Problem {
    pub fn new(poisoned: &Graph, order: usize, train: &[usize]) -> Result<Self> {
        let labels = poisoned
            .labels()
            .ok_or_else(|| Error::invalid("structure learning needs node labels"))?
            .to_vec();
        let na = poisoned.normalized();
        let mut targets = Vec::with_capacity(order);
        for k in 1..=order {
            targets.push(normalized_power(&na, k)?);
        }
        let x = poisoned.features_or_identity().into_owned();
        let gram = x.matmul_t(&x)?;
        let x_norm2 = x.frobenius_norm().powi(2);
        Ok(Self {
            targets,
            x,
            gram,
            x_norm2,
            labels,
            classes: poisoned.class_count(),
            train: train.to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    fn check(&self, s: &DenseMatrix, cfg: &LearnerConfig) -> Result<()> {
        if s.shape() != (self.n(), self.n()) {
            return Err(Error::DimensionMismatch {
                op: "structure loss",
                left: s.shape(),
                right: (self.n(), self.n()),
            });
        }
        if cfg.order() > self.targets.len() {
            return Err(Error::invalid(format!(
                "order {} exceeds the {} precomputed targets",
                cfg.order(),
                self.targets.len()
            )));
        }
        Ok(())
    }
}

/// `D̃^{-1/2}(S + I)D̃^{-1/2}` with caller-supplied `D̃^{-1/2}`.
fn normalize_frozen(s: &DenseMatrix, inv_sqrt: &[f64]) -> DenseMatrix {
    let mut out = s.clone();
    for i in 0..s.rows() {
        out[(i, i)] += 1.0;
    }
    out.scale_rows_cols(inv_sqrt, inv_sqrt)
        .expect("square matrix")
}

/// The differentiable terms evaluated at a given `Ŝ`.
fn smooth_terms(
    s_hat: &DenseMatrix,
    problem: &Problem,
    params: &GcnParams,
    cfg: &LearnerConfig,
) -> Result<(Vec<f64>, f64, f64)> {
    let fidelity = cfg
        .eta
        .iter()
        .zip(&problem.targets)
        .map(|(&eta, t)| {
            if eta == 0.0 {
                return Ok(0.0);
            }
            let diff = s_hat.sub(t)?;
            Ok(eta * diff.frobenius_norm().powi(2))
        })
        .collect::<Result<Vec<_>>>()?;
    // tr(Xᵀ(I − Ŝ)X) = ‖X‖² − ⟨Ŝ, XXᵀ⟩
    let smooth = if cfg.lambda == 0.0 {
        0.0
    } else {
        let inner: f64 = s_hat
            .data()
            .iter()
            .zip(problem.gram.data())
            .map(|(a, b)| a * b)
            .sum();
        cfg.lambda * (problem.x_norm2 - inner)
    };
    let gnn = if cfg.gnn_weight == 0.0 {
        0.0
    } else {
        let out = gcn_forward(s_hat, &problem.x, params)?;
        cfg.gnn_weight * masked_cross_entropy(&out.probabilities, &problem.labels, &problem.train)?
    };
    Ok((fidelity, smooth, gnn))
}

/// All loss components at `s`.
pub fn structure_loss(
    s: &DenseMatrix,
    problem: &Problem,
    params: &GcnParams,
    cfg: &LearnerConfig,
) -> Result<LossComponents> {
    problem.check(s, cfg)?;
    let s_hat = normalize_adjacency(s)?.matrix;
    let (fidelity, smooth, gnn) = smooth_terms(&s_hat, problem, params, cfg)?;
    let l1 = cfg.alpha * s.l1_norm();
    let nuclear = if cfg.beta == 0.0 {
        0.0
    } else {
        cfg.beta * nuclear_norm(s)?
    };
    let total = l1 + nuclear + fidelity.iter().sum::<f64>() + smooth + gnn;
    Ok(LossComponents {
        l1,
        nuclear,
        fidelity,
        smooth,
        gnn,
        total,
    })
}

/// Sum of the differentiable terms with degrees frozen at `inv_sqrt`.
pub fn smooth_loss_frozen(
    s: &DenseMatrix,
    inv_sqrt: &[f64],
    problem: &Problem,
    params: &GcnParams,
    cfg: &LearnerConfig,
) -> Result<f64> {
    problem.check(s, cfg)?;
    let s_hat = normalize_frozen(s, inv_sqrt);
    let (fidelity, smooth, gnn) = smooth_terms(&s_hat, problem, params, cfg)?;
    Ok(fidelity.iter().sum::<f64>() + smooth + gnn)
}

/// `D̃^{-1/2}` of `S + I`.
pub fn frozen_degrees(s: &DenseMatrix) -> Vec<f64> {
    s.row_sums()
        .iter()
        .map(|d| 1.0 / (d + 1.0).sqrt())
        .collect()
}

/// Gradient of the fidelity, smoothness and GNN terms with respect to `S`,
/// degrees frozen at their value for `s`, symmetrised.
pub fn grad_structure_smooth(
    s: &DenseMatrix,
    problem: &Problem,
    params: &GcnParams,
    cfg: &LearnerConfig,
) -> Result<DenseMatrix> {
    problem.check(s, cfg)?;
    let inv_sqrt = frozen_degrees(s);
    let s_hat = normalize_frozen(s, &inv_sqrt);

    let mut g = if cfg.gnn_weight == 0.0 {
        DenseMatrix::zeros(s.rows(), s.cols())
    } else {
        let out = gcn_forward(&s_hat, &problem.x, params)?;
        let grads = gcn_backward(
            &out.cache,
            params,
            &out.probabilities,
            &problem.labels,
            &problem.train,
            true,
        )?;
        grads.s_hat.expect("requested").scale(cfg.gnn_weight)
    };
    for (&eta, t) in cfg.eta.iter().zip(&problem.targets) {
        if eta != 0.0 {
            g.axpy(2.0 * eta, &s_hat.sub(t)?)?;
        }
    }
    if cfg.lambda != 0.0 {
        g.axpy(-cfg.lambda, &problem.gram)?;
    }
    let mut g = g.scale_rows_cols(&inv_sqrt, &inv_sqrt)?;
    g.symmetrize()?;
    Ok(g)
}

/// Clamp to `[0, 1]`, zero the diagonal, then symmetrise.
pub fn project(s: &mut DenseMatrix) {
    s.map_inplace(|v| v.clamp(0.0, 1.0));
    for i in 0..s.rows() {
        s[(i, i)] = 0.0;
    }
    s.symmetrize().expect("square matrix");
}

/// One proximal update of `S` given its smooth gradient: nuclear prox, L1
/// prox, projection.
pub fn proximal_update(
    s: &DenseMatrix,
    grad: &DenseMatrix,
    cfg: &LearnerConfig,
) -> Result<DenseMatrix> {
    let (alpha_eff, beta_eff) = scaled_prox_weights(cfg, cfg.lr_s)?;
    let mut next = s.clone();
    next.axpy(-cfg.lr_s, grad)?;
    for i in 0..next.rows() {
        next[(i, i)] = s.get(i, i);
    }
    next.symmetrize()?;
    if beta_eff > 0.0 {
        next = prox_nuclear(&next, beta_eff)?;
    }
    if alpha_eff > 0.0 {
        next = soft_threshold(&next, alpha_eff)?;
    }
    project(&mut next);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Present when loss tracing is enabled.
    pub loss: Option<LossComponents>,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct LearnedStructure {
    /// Best-validation structure: entries in `[0, 1]`, symmetric, zero
    /// diagonal.
    pub s: DenseMatrix,
    pub params: GcnParams,
    pub loss_trace: Vec<IterationRecord>,
    pub best_iteration: usize,
    pub best_val_accuracy: f64,
    pub test_accuracy: f64,
}

impl LearnedStructure {
    /// The learned structure as a weighted graph with the input's features
    /// and labels.
    pub fn graph(&self, like: &Graph) -> Result<Graph> {
        like.with_adjacency(self.s.clone())
    }
}

/// Alternating optimisation starting from `S = A` and randomly initialised
/// GCN weights. GCN steps inside the loop run without dropout.
pub fn learn_structure(
    poisoned: &Graph,
    split: &SplitMask,
    cfg: &LearnerConfig,
    train_cfg: &TrainConfig,
) -> Result<LearnedStructure> {
    cfg.validate()?;
    train_cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let problem = Problem::new(poisoned, cfg.order(), &split.train)?;
    let mut trainer = Trainer::new(problem.x.cols(), problem.classes, train_cfg)?;
    let mut s = poisoned.adjacency().clone();
    let mut trace = Vec::new();
    let mut best: Option<(f64, f64, usize, DenseMatrix, GcnParams)> = None;
    let mut since_best = 0;

    for iteration in 0..cfg.outer_iters {
        let grad = grad_structure_smooth(&s, &problem, trainer.params(), cfg)?;
        s = proximal_update(&s, &grad, cfg).map_err(|e| match e {
            Error::NoConvergence { .. } | Error::Numerical(_) => Error::Numerical(format!(
                "structure update failed at iteration {iteration}: {e}"
            )),
            other => other,
        })?;
        if !s.all_finite() {
            return Err(Error::Numerical(format!(
                "non-finite structure at iteration {iteration}"
            )));
        }

        let s_hat = normalize_adjacency(&s)?.matrix;
        let mut train_loss = f64::NAN;
        for _ in 0..cfg.tau {
            train_loss =
                trainer.step(&s_hat, &problem.x, &problem.labels, &problem.train, false)?;
        }
        if !train_loss.is_finite() {
            return Err(Error::Numerical(format!(
                "GCN loss diverged at iteration {iteration}"
            )));
        }

        let eval = gcn_forward(&s_hat, &problem.x, trainer.params())?;
        let (val_accuracy, val_loss) = if split.val.is_empty() {
            (0.0, train_loss)
        } else {
            (
                accuracy(&eval.probabilities, &problem.labels, &split.val),
                masked_cross_entropy(&eval.probabilities, &problem.labels, &split.val)?,
            )
        };
        let loss = if cfg.trace_loss {
            Some(structure_loss(&s, &problem, trainer.params(), cfg)?)
        } else {
            None
        };
        trace.push(IterationRecord {
            iteration,
            loss,
            train_loss,
            val_accuracy,
        });

        let improved = match &best {
            None => true,
            Some((acc, vl, ..)) => val_accuracy > *acc || (val_accuracy == *acc && val_loss < *vl),
        };
        if improved {
            best = Some((
                val_accuracy,
                val_loss,
                iteration,
                s.clone(),
                trainer.params().clone(),
            ));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log::debug!("structure learning stopped early at iteration {iteration}");
                break;
            }
        }
    }

    let (best_val_accuracy, best_iteration, s, params) = match best {
        Some((acc, _, it, s, p)) => (acc, it, s, p),
        None => (0.0, 0, s, trainer.params().clone()),
    };
    let s_hat = normalize_adjacency(&s)?.matrix;
    let eval = gcn_forward(&s_hat, &problem.x, &params)?;
    let test_accuracy = accuracy(&eval.probabilities, &problem.labels, &split.test);
    Ok(LearnedStructure {
        s,
        params,
        loss_trace: trace,
        best_iteration,
        best_val_accuracy,
        test_accuracy,
    })
}
