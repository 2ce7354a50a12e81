use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Inverse-frequency class weights `N / (K * N_c)`; their count-weighted mean is 1.
pub fn class_weights<L: Ord + Clone + std::fmt::Debug>(
    counts: &BTreeMap<L, usize>,
) -> Result<BTreeMap<L, f64>> {
    if let Some((label, _)) = counts.iter().find(|(_, &n)| n == 0) {
        return Err(Error::EmptyClass(format!("{label:?}")));
    }
    if counts.is_empty() {
        return Err(Error::InvalidInput("no classes to weight".into()));
    }
    let total: usize = counts.values().sum();
    let k = counts.len() as f64;
    Ok(counts
        .iter()
        .map(|(l, &n)| (l.clone(), total as f64 / (k * n as f64)))
        .collect())
}

/// Weighted cross-entropy `-w_y * log softmax(z)_y` and its gradient
/// `w_y * (softmax(z) - onehot(y))` with respect to the logits.
pub fn weighted_ce_loss(logits: &[f64], label: usize, weights: &[f64]) -> (f64, Vec<f64>) {
    let w = weights[label];
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    let loss = -w * (logits[label] - log_sum);
    let grad = logits
        .iter()
        .enumerate()
        .map(|(k, &z)| {
            let p = (z - log_sum).exp();
            w * (p - if k == label { 1.0 } else { 0.0 })
        })
        .collect();
    (loss, grad)
}
