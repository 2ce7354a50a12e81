//! Mini-batch training with class-weighted cross-entropy and early stopping.

use std::collections::{BTreeMap, BTreeSet};

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{featurize, FeatureConfig, SparseVector};
use super::loss::{class_weights, weighted_ce_loss};
use super::{argmax, EpochLog, TrainedClassifier};
use crate::corpus::{Example, Label};
use crate::error::{Error, Result};

/// Learning rate used for transformer fine-tuning in the reference setup.
/// Too small for the linear baseline, whose default is 1e-3.
pub const TRANSFORMER_LEARNING_RATE: f64 = 5e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub early_stop_patience: usize,
    pub weighted_loss: bool,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            batch_size: 8,
            max_epochs: 10,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            early_stop_patience: 2,
            weighted_loss: true,
            seed: 0,
            optimizer: Optimizer::Adam,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 {
            return bad("batch_size, max_epochs and early_stop_patience must be positive");
        }
        if !(self.learning_rate > 0.0 && self.adam_eps > 0.0) {
            return bad("learning_rate and adam_eps must be positive");
        }
        if !(0.0 < self.adam_beta1 && self.adam_beta1 < 1.0 && 0.0 < self.adam_beta2 && self.adam_beta2 < 1.0) {
            return bad("adam betas must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

/// Patience-based early stopping on validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records the loss after `epoch` (1-based).
    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            StopDecision {
                improved: true,
                stop: false,
            }
        } else {
            self.since_best += 1;
            StopDecision {
                improved: false,
                stop: self.since_best >= self.patience,
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

/// Trains on labeled examples. Classes are the distinct training labels in
/// label order; validation labels must be among them.
pub fn train<L: Label>(
    train: &[Example<L>],
    val: &[Example<L>],
    hp: &Hyperparams,
    fc: &FeatureConfig,
) -> Result<TrainedClassifier> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let labels: BTreeSet<&L> = train.iter().map(|e| &e.label).collect();
    let classes: Vec<&L> = labels.into_iter().collect();
    let index = |l: &L| classes.iter().position(|c| *c == l);

    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let train_set: Vec<(&str, usize)> = train
        .iter()
        .map(|e| {
            let i = index(&e.label).unwrap();
            *counts.entry(i).or_default() += 1;
            (e.text.as_str(), i)
        })
        .collect();
    let val_set = val
        .iter()
        .map(|e| {
            index(&e.label)
                .map(|i| (e.text.as_str(), i))
                .ok_or_else(|| Error::UnknownLabel {
                    label: e.label.to_string(),
                    known: classes.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", "),
                })
        })
        .collect::<Result<Vec<_>>>()?;

    let weights: Vec<f64> = if hp.weighted_loss {
        class_weights(&counts)?.into_values().collect()
    } else {
        vec![1.0; classes.len()]
    };
    let names = classes.iter().map(|c| c.to_string()).collect();
    train_indexed(names, &weights, &train_set, &val_set, hp, fc)
}

struct OptimState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl OptimState {
    fn new(n: usize) -> Self {
        OptimState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

fn apply_update(params: &mut [f64], grad: &[f64], state: &mut OptimState, hp: &Hyperparams) {
    match hp.optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= hp.learning_rate * g;
            }
        }
        Optimizer::Adam => {
            state.step += 1;
            let (b1, b2) = (hp.adam_beta1, hp.adam_beta2);
            let c1 = 1.0 - b1.powi(state.step);
            let c2 = 1.0 - b2.powi(state.step);
            for i in 0..params.len() {
                let g = grad[i];
                state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
                state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
                let m_hat = state.m[i] / c1;
                let v_hat = state.v[i] / c2;
                params[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.adam_eps);
            }
        }
    }
}

fn evaluate_set(
    model: &TrainedClassifier,
    xs: &[SparseVector],
    ys: &[usize],
    weights: &[f64],
) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let (loss, correct) = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let logits = model.logits(x);
            let (l, _) = weighted_ce_loss(&logits, y, weights);
            (l, usize::from(argmax(&logits) == y))
        })
        .fold((0.0, 0usize), |(a, b), (l, c)| (a + l, b + c));
    (loss / xs.len() as f64, correct as f64 / xs.len() as f64)
}

/// Trains on `(text, class index)` pairs with explicit per-class loss weights.
///
/// Gradients are averaged over each mini-batch. With a non-empty validation
/// set the parameters from the epoch with the lowest validation loss are
/// returned and training stops after `early_stop_patience` epochs without
/// improvement; otherwise the final parameters are returned.
pub fn train_indexed(
    classes: Vec<String>,
    class_weights: &[f64],
    train: &[(&str, usize)],
    val: &[(&str, usize)],
    hp: &Hyperparams,
    fc: &FeatureConfig,
) -> Result<TrainedClassifier> {
    hp.validate()?;
    fc.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if classes.is_empty() || class_weights.len() != classes.len() {
        return Err(Error::Config("one loss weight per class is required".into()));
    }
    let distinct: BTreeSet<&String> = classes.iter().collect();
    if distinct.len() != classes.len() {
        return Err(Error::Config("duplicate class names".into()));
    }
    if let Some(&(_, y)) = train.iter().chain(val).find(|(_, y)| *y >= classes.len()) {
        return Err(Error::InvalidInput(format!("class index {y} out of range")));
    }

    let featurize_all = |set: &[(&str, usize)]| -> (Vec<SparseVector>, Vec<usize>) {
        let xs = set.par_iter().map(|(t, _)| featurize(t, fc)).collect();
        (xs, set.iter().map(|(_, y)| *y).collect())
    };
    let (train_x, train_y) = featurize_all(train);
    let (val_x, val_y) = featurize_all(val);

    let k = classes.len();
    let dim = fc.hash_dim;
    let mut model = TrainedClassifier::zeros(classes, fc.clone());
    let mut w_state = OptimState::new(k * dim);
    let mut b_state = OptimState::new(k);
    let mut grad_w = vec![0.0; k * dim];
    let mut grad_b = vec![0.0; k];
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut early = EarlyStopping::new(hp.early_stop_patience);
    let mut best: Option<(Vec<f64>, Vec<f64>, usize)> = None;
    let mut log = Vec::new();

    for epoch in 1..=hp.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = &train_x[i];
                let (_, g) = weighted_ce_loss(&model.logits(x), train_y[i], class_weights);
                for (c, gc) in g.iter().enumerate() {
                    grad_b[c] += gc * scale;
                    let row = &mut grad_w[c * dim..(c + 1) * dim];
                    for (j, v) in x.iter() {
                        row[j] += gc * v * scale;
                    }
                }
            }
            apply_update(&mut model.weights, &grad_w, &mut w_state, hp);
            apply_update(&mut model.bias, &grad_b, &mut b_state, hp);
        }

        let (train_loss, train_accuracy) = evaluate_set(&model, &train_x, &train_y, class_weights);
        if !train_loss.is_finite() || !model.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: train_loss,
            });
        }
        let mut entry = EpochLog {
            epoch,
            train_loss,
            train_accuracy,
            val_loss: None,
            val_accuracy: None,
        };
        let mut stop = false;
        if val_x.is_empty() {
            best = Some((model.weights.clone(), model.bias.clone(), epoch));
        } else {
            let (val_loss, val_accuracy) = evaluate_set(&model, &val_x, &val_y, class_weights);
            if !val_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    loss: val_loss,
                });
            }
            entry.val_loss = Some(val_loss);
            entry.val_accuracy = Some(val_accuracy);
            let decision = early.observe(epoch, val_loss);
            if decision.improved {
                best = Some((model.weights.clone(), model.bias.clone(), epoch));
            }
            stop = decision.stop;
        }
        info!(
            "epoch {epoch}: train loss {train_loss:.4} acc {train_accuracy:.4} val loss {:?}",
            entry.val_loss
        );
        log.push(entry);
        if stop {
            break;
        }
    }

    let (weights, bias, best_epoch) = best.expect("at least one epoch runs");
    model.weights = weights;
    model.bias = bias;
    model.best_epoch = best_epoch;
    model.training_log = log;
    Ok(model)
}
