//! Classifier backends.
//!
//! The baseline backend is multinomial logistic regression over hashed
//! n-gram features ([`TrainedClassifier`]), trained with class-weighted
//! cross-entropy. Anything implementing [`Classifier`] can stand in for it,
//! including the HTTP adapter in [`remote`].

mod features;
mod io;
mod loss;
pub mod remote;
mod train;

use serde::{Deserialize, Serialize};

pub use features::{featurize, FeatureConfig, SparseVector};
pub use io::{load, save, to_bytes, from_bytes, FORMAT_VERSION, MAGIC};
pub use loss::{class_weights, softmax, weighted_ce_loss};
pub use train::{
    train, train_indexed, EarlyStopping, Hyperparams, Optimizer, StopDecision,
    TRANSFORMER_LEARNING_RATE,
};

use crate::error::Result;

/// Index of the largest value; the first one on exact ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub index: usize,
    pub label: String,
    pub probs: Vec<f64>,
}

/// A text classifier producing a probability per class.
pub trait Classifier: Send + Sync {
    fn classes(&self) -> &[String];

    /// Class probabilities for an already normalized text.
    fn predict_proba(&self, text: &str) -> Result<Vec<f64>>;

    fn predict(&self, text: &str) -> Result<Prediction> {
        let probs = self.predict_proba(text)?;
        let index = argmax(&probs);
        Ok(Prediction {
            index,
            label: self.classes()[index].clone(),
            probs,
        })
    }

    fn class_index(&self, label: &str) -> Option<usize> {
        self.classes().iter().position(|c| c == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Trained logistic-regression model over hashed n-gram features.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedClassifier {
    pub feature_config: FeatureConfig,
    pub class_list: Vec<String>,
    /// Row-major `classes x hash_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub training_log: Vec<EpochLog>,
    /// Epoch whose parameters were kept (0 for an untrained model).
    pub best_epoch: usize,
}

impl TrainedClassifier {
    /// An all-zero model; predicts the uniform distribution.
    pub fn zeros(class_list: Vec<String>, feature_config: FeatureConfig) -> Self {
        let k = class_list.len();
        TrainedClassifier {
            weights: vec![0.0; k * feature_config.hash_dim],
            bias: vec![0.0; k],
            feature_config,
            class_list,
            training_log: Vec::new(),
            best_epoch: 0,
        }
    }

    pub fn logits(&self, x: &SparseVector) -> Vec<f64> {
        let dim = self.feature_config.hash_dim;
        self.bias
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let row = &self.weights[k * dim..(k + 1) * dim];
                b + x.iter().map(|(j, v)| row[j] * v).sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, text: &str) -> Prediction {
        let probs = softmax(&self.logits(&featurize(text, &self.feature_config)));
        let index = argmax(&probs);
        Prediction {
            index,
            label: self.class_list[index].clone(),
            probs,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

impl Classifier for TrainedClassifier {
    fn classes(&self) -> &[String] {
        &self.class_list
    }

    fn predict_proba(&self, text: &str) -> Result<Vec<f64>> {
        Ok(TrainedClassifier::predict(self, text).probs)
    }

    fn predict(&self, text: &str) -> Result<Prediction> {
        Ok(TrainedClassifier::predict(self, text))
    }
}

impl<C: Classifier + ?Sized> Classifier for std::sync::Arc<C> {
    fn classes(&self) -> &[String] {
        (**self).classes()
    }

    fn predict_proba(&self, text: &str) -> Result<Vec<f64>> {
        (**self).predict_proba(text)
    }
}

impl<C: Classifier + ?Sized> Classifier for Box<C> {
    fn classes(&self) -> &[String] {
        (**self).classes()
    }

    fn predict_proba(&self, text: &str) -> Result<Vec<f64>> {
        (**self).predict_proba(text)
    }
}
