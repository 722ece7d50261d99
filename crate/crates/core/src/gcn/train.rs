use serde::{Deserialize, Serialize};

use super::{
    gcn_backward, gcn_forward, gcn_forward_dropout, masked_cross_entropy, GcnParams, Gradients,
};
use crate::datasets::SplitMask;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::rng::{seeded, streams, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub dropout: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            lr: 0.01,
            weight_decay: 5e-4,
            epochs: 200,
            dropout: 0.5,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::invalid("hidden width must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(format!(
                "weight decay {} must be >= 0",
                self.weight_decay
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// First and second moment estimates for one weight matrix.
#[derive(Debug, Clone)]
struct Moments {
    m: DenseMatrix,
    v: DenseMatrix,
}

/// Adaptive moment estimation with the usual constants.
#[derive(Debug, Clone)]
pub struct Adam {
    moments: [Moments; 2],
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &GcnParams) -> Self {
        let zero = |m: &DenseMatrix| Moments {
            m: DenseMatrix::zeros(m.rows(), m.cols()),
            v: DenseMatrix::zeros(m.rows(), m.cols()),
        };
        Self {
            moments: [zero(params.w1()), zero(params.w2())],
            t: 0,
        }
    }

    fn step(&mut self, lr: f64, weights: [&mut DenseMatrix; 2], grads: [&DenseMatrix; 2]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for ((w, g), mo) in weights.into_iter().zip(grads).zip(&mut self.moments) {
            let w = w.data_mut();
            let (m, v) = (mo.m.data_mut(), mo.v.data_mut());
            for k in 0..w.len() {
                let gk = g.data()[k];
                m[k] = Self::BETA1 * m[k] + (1.0 - Self::BETA1) * gk;
                v[k] = Self::BETA2 * v[k] + (1.0 - Self::BETA2) * gk * gk;
                w[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Owns parameters and optimiser state for incremental training.
#[derive(Debug, Clone)]
pub struct Trainer {
    params: GcnParams,
    adam: Option<Adam>,
    cfg: TrainConfig,
    dropout_rng: Rng,
}

impl Trainer {
    pub fn new(features: usize, classes: usize, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init_rng = seeded(cfg.seed, streams::INIT);
        let params = GcnParams::glorot(features, cfg.hidden, classes, &mut init_rng);
        Ok(Self::with_params(params, cfg))
    }

    pub fn with_params(params: GcnParams, cfg: &TrainConfig) -> Self {
        let adam = (cfg.optimizer == Optimizer::Adam).then(|| Adam::new(&params));
        Self {
            params,
            adam,
            cfg: cfg.clone(),
            dropout_rng: seeded(cfg.seed, streams::DROPOUT),
        }
    }

    pub fn params(&self) -> &GcnParams {
        &self.params
    }

    pub fn into_params(self) -> GcnParams {
        self.params
    }

    /// One full-batch step on the training loss; returns the loss before the
    /// update.
    pub fn step(
        &mut self,
        s_hat: &DenseMatrix,
        x: &DenseMatrix,
        labels: &[usize],
        train: &[usize],
        use_dropout: bool,
    ) -> Result<f64> {
        let out = if use_dropout && self.cfg.dropout > 0.0 {
            gcn_forward_dropout(
                s_hat,
                x,
                &self.params,
                self.cfg.dropout,
                &mut self.dropout_rng,
            )?
        } else {
            gcn_forward(s_hat, x, &self.params)?
        };
        let loss = masked_cross_entropy(&out.probabilities, labels, train)?;
        let grads = gcn_backward(
            &out.cache,
            &self.params,
            &out.probabilities,
            labels,
            train,
            false,
        )?;
        self.apply(grads);
        Ok(loss)
    }

    /// Applies weight decay and one optimiser update.
    pub fn apply(&mut self, mut grads: Gradients) {
        let wd = self.cfg.weight_decay;
        if wd > 0.0 {
            grads.w1.axpy(wd, self.params.w1()).expect("same shape");
            grads.w2.axpy(wd, self.params.w2()).expect("same shape");
        }
        let lr = self.cfg.lr;
        let (w1, w2) = self.params.weights_mut();
        match &mut self.adam {
            Some(adam) => adam.step(lr, [w1, w2], [&grads.w1, &grads.w2]),
            None => {
                w1.axpy(-lr, &grads.w1).expect("same shape");
                w2.axpy(-lr, &grads.w2).expect("same shape");
            }
        }
    }
}

/// Fraction of `mask` whose arg-max prediction equals the label.
pub fn accuracy(probabilities: &DenseMatrix, labels: &[usize], mask: &[usize]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let correct = mask
        .iter()
        .filter(|&&i| {
            let row = probabilities.row(i);
            let best = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                .unwrap_or(0);
            best == labels[i]
        })
        .count();
    correct as f64 / mask.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Parameters of the epoch with the best validation accuracy (ties go to
    /// the lower validation loss).
    pub params: GcnParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub test_accuracy: f64,
}

/// Full-batch training on a fixed propagation matrix.
pub fn train_gcn(
    s_hat: &DenseMatrix,
    x: &DenseMatrix,
    labels: &[usize],
    classes: usize,
    split: &SplitMask,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    if split.train.is_empty() {
        return Err(Error::invalid("training split is empty"));
    }
    let mut trainer = Trainer::new(x.cols(), classes, cfg)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, f64, usize, GcnParams)> = None;

    for epoch in 0..cfg.epochs {
        let train_loss = trainer.step(s_hat, x, labels, &split.train, true)?;
        if !train_loss.is_finite() || !trainer.params().all_finite() {
            return Err(Error::Numerical(format!(
                "GCN training diverged at epoch {epoch}"
            )));
        }
        let eval = gcn_forward(s_hat, x, trainer.params())?;
        let (val_loss, val_accuracy) = if split.val.is_empty() {
            (train_loss, 0.0)
        } else {
            (
                masked_cross_entropy(&eval.probabilities, labels, &split.val)?,
                accuracy(&eval.probabilities, labels, &split.val),
            )
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
        let improved = match &best {
            None => true,
            Some((acc, loss, _, _)) => {
                val_accuracy > *acc || (val_accuracy == *acc && val_loss < *loss)
            }
        };
        if improved {
            best = Some((val_accuracy, val_loss, epoch, trainer.params().clone()));
        }
    }

    let (best_val_accuracy, _, best_epoch, params) = match best {
        Some(b) => b,
        None => (0.0, f64::NAN, 0, trainer.into_params()),
    };
    let eval = gcn_forward(s_hat, x, &params)?;
    let test_accuracy = accuracy(&eval.probabilities, labels, &split.test);
    Ok(TrainResult {
        params,
        history,
        best_epoch,
        best_val_accuracy,
        test_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_sbm, make_split, SbmConfig, SplitRatios};

    #[test]
    fn accuracy_counts_argmax() {
        let p = DenseMatrix::from_rows(&[[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]).unwrap();
        assert_eq!(accuracy(&p, &[0, 1, 1], &[0, 1, 2]), 2.0 / 3.0);
        assert_eq!(accuracy(&p, &[0, 1, 1], &[]), 0.0);
    }

    #[test]
    fn separable_cliques_are_learned_exactly() {
        let g = generate_sbm(&SbmConfig {
            n: 40,
            classes: 2,
            p_in: 1.0,
            p_out: 0.0,
            noise_p: 0.5,
            self_loop_homophily: false,
            seed: 1,
        })
        .unwrap();
        let split = make_split(
            40,
            SplitRatios {
                train: 0.2,
                val: 0.2,
                test: 0.6,
            },
            4,
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 100,
            ..TrainConfig::default()
        };
        let x = g.features().unwrap();
        let r = train_gcn(
            &g.normalized().matrix,
            x,
            g.labels().unwrap(),
            2,
            &split,
            &cfg,
        )
        .unwrap();
        assert_eq!(r.test_accuracy, 1.0);
        assert_eq!(r.history.len(), 100);
    }

    #[test]
    fn seeded_training_is_bitwise_reproducible() {
        let g = generate_sbm(&SbmConfig {
            n: 30,
            classes: 3,
            p_in: 0.4,
            p_out: 0.05,
            noise_p: 0.3,
            self_loop_homophily: false,
            seed: 2,
        })
        .unwrap();
        let split = make_split(30, SplitRatios::default(), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            seed: 11,
            ..TrainConfig::default()
        };
        let run = || {
            train_gcn(
                &g.normalized().matrix,
                g.features().unwrap(),
                g.labels().unwrap(),
                3,
                &split,
                &cfg,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn sgd_option_reduces_loss() {
        let x = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let split = SplitMask {
            train: vec![0, 1, 2, 3],
            val: vec![0, 1],
            test: vec![2, 3],
        };
        let cfg = TrainConfig {
            optimizer: Optimizer::Sgd,
            lr: 0.5,
            dropout: 0.0,
            epochs: 50,
            ..TrainConfig::default()
        };
        let r = train_gcn(
            &DenseMatrix::identity(4),
            &x,
            &[0, 1, 0, 1],
            2,
            &split,
            &cfg,
        )
        .unwrap();
        assert!(r.history.last().unwrap().train_loss < r.history[0].train_loss);
    }

    #[test]
    fn config_validation() {
        let bad = [
            TrainConfig {
                lr: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                hidden: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                dropout: 1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                weight_decay: -1.0,
                ..TrainConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
