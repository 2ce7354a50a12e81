//! Local surrogate explanations (LIME) over whitespace tokens.
//!
//! Tokens are switched off at random, the classifier scores every perturbed
//! text, and a ridge regression weighted by proximity to the original text
//! gives one weight per token.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Classifier;

/// Largest token count for exhaustive enumeration of masks.
pub const MAX_EXHAUSTIVE_TOKENS: usize = 12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub n_samples: usize,
    /// Number of tokens reported in [`Explanation::token_weights`].
    pub n_features: usize,
    /// Kernel width over cosine distance; `0.75 * sqrt(token_count)` when unset.
    pub kernel_width: Option<f64>,
    pub ridge_lambda: f64,
    pub seed: u64,
    /// Use every non-empty mask instead of sampling.
    pub exhaustive: bool,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            n_samples: 1000,
            n_features: 6,
            kernel_width: None,
            ridge_lambda: 1.0,
            seed: 0,
            exhaustive: false,
        }
    }
}

impl ExplainConfig {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !self.exhaustive && self.n_samples < 10 {
            return Err(Error::Config("n_samples must be at least 10".into()));
        }
        if !(self.ridge_lambda > 0.0) {
            return Err(Error::Config("ridge_lambda must be positive".into()));
        }
        if matches!(self.kernel_width, Some(w) if !(w > 0.0)) {
            return Err(Error::Config("kernel width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub target_class: String,
    /// Probability of `target_class` for the unperturbed text.
    pub probability: f64,
    /// Top tokens by decreasing absolute weight.
    pub token_weights: Vec<(String, f64)>,
    pub intercept: f64,
    /// Every token of the input, in order, with its weight.
    pub tokens: Vec<String>,
    pub weights: Vec<f64>,
}

impl Explanation {
    /// Token indices by decreasing absolute weight; ties keep token order.
    pub fn ranking(&self) -> Vec<usize> {
        ranking(&self.weights)
    }

    /// Surrogate prediction for the unperturbed text.
    pub fn surrogate_full(&self) -> f64 {
        self.intercept + self.weights.iter().sum::<f64>()
    }
}

fn ranking(weights: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| weights[b].abs().total_cmp(&weights[a].abs()).then(a.cmp(&b)));
    idx
}

fn join_kept(tokens: &[String], mask: &[bool]) -> String {
    let kept: Vec<&str> = tokens
        .iter()
        .zip(mask)
        .filter(|(_, &b)| b)
        .map(|(t, _)| t.as_str())
        .collect();
    kept.join(" ")
}

/// `n` random masks over `tokens` with their texts. The first mask keeps
/// everything; the rest keep each token with probability 1/2 and are
/// resampled when empty.
pub fn perturb(tokens: &[String], n: usize, seed: u64) -> Vec<(Vec<bool>, String)> {
    let k = tokens.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if n == 0 || k == 0 {
        return Vec::new();
    }
    let mut masks: Vec<Vec<bool>> = Vec::with_capacity(n);
    masks.push(vec![true; k]);
    while masks.len() < n {
        let m: Vec<bool> = (0..k).map(|_| rng.random_bool(0.5)).collect();
        if m.iter().any(|&b| b) {
            masks.push(m);
        }
    }
    masks
        .into_iter()
        .map(|m| {
            let text = join_kept(tokens, &m);
            (m, text)
        })
        .collect()
}

/// All `2^k - 1` non-empty masks, the full mask first.
pub fn exhaustive_masks(k: usize) -> Vec<Vec<bool>> {
    let full = (1u32 << k) - 1;
    (1..=full)
        .rev()
        .map(|bits| (0..k).map(|i| bits & (1 << i) != 0).collect())
        .collect()
}

fn kernel(mask: &[bool], width: f64) -> f64 {
    let kept = mask.iter().filter(|&&b| b).count() as f64;
    let d = 1.0 - (kept / mask.len() as f64).sqrt();
    (-(d * d) / (width * width)).exp()
}

/// Weighted ridge regression with an unpenalised intercept. Returns
/// `(coefficients, intercept)`.
pub fn weighted_ridge(x: &[Vec<f64>], y: &[f64], w: &[f64], alpha: f64) -> Result<(Vec<f64>, f64)> {
    let n = x.len();
    let p = x.first().map_or(0, Vec::len);
    let total: f64 = w.iter().sum();
    if n == 0 || total <= 0.0 {
        return Err(Error::InvalidInput("no weighted samples".into()));
    }
    let x_mean: Vec<f64> = (0..p)
        .map(|j| x.iter().zip(w).map(|(r, wi)| wi * r[j]).sum::<f64>() / total)
        .collect();
    let y_mean = y.iter().zip(w).map(|(yi, wi)| wi * yi).sum::<f64>() / total;
    let xc = DMatrix::from_fn(n, p, |i, j| (x[i][j] - x_mean[j]) * w[i].sqrt());
    let yc = DVector::from_fn(n, |i, _| (y[i] - y_mean) * w[i].sqrt());
    let gram = xc.transpose() * &xc + DMatrix::identity(p, p) * alpha;
    let rhs = xc.transpose() * yc;
    let chol = gram.cholesky().ok_or(Error::Singular)?;
    let beta = chol.solve(&rhs);
    let intercept = y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok((beta.iter().copied().collect(), intercept))
}

/// Explains the model's probability for `class` (default: the predicted
/// class) on `text`.
pub fn lime_explain(
    model: &dyn Classifier,
    text: &str,
    class: Option<&str>,
    config: &ExplainConfig,
) -> Result<Explanation> {
    config.validate()?;
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    let k = tokens.len();
    if k == 0 {
        return Err(Error::InvalidInput("cannot explain an empty text".into()));
    }
    let original = model.predict(text)?;
    let target = match class {
        Some(c) => model.class_index(c).ok_or_else(|| Error::UnknownLabel {
            label: c.to_string(),
            known: model.classes().join(", "),
        })?,
        None => original.index,
    };
    let samples = if config.exhaustive {
        if k > MAX_EXHAUSTIVE_TOKENS {
            return Err(Error::InvalidInput(format!(
                "exhaustive explanation supports at most {MAX_EXHAUSTIVE_TOKENS} tokens, got {k}"
            )));
        }
        exhaustive_masks(k)
            .into_iter()
            .map(|m| {
                let text = join_kept(&tokens, &m);
                (m, text)
            })
            .collect()
    } else {
        perturb(&tokens, config.n_samples, config.seed)
    };
    let y: Vec<f64> = samples
        .par_iter()
        .map(|(_, t)| Ok(model.predict_proba(t)?[target]))
        .collect::<Result<_>>()?;
    let x: Vec<Vec<f64>> = samples
        .iter()
        .map(|(m, _)| m.iter().map(|&b| f64::from(u8::from(b))).collect())
        .collect();
    let width = config.kernel_width.unwrap_or(0.75 * (k as f64).sqrt());
    let w: Vec<f64> = samples.iter().map(|(m, _)| kernel(m, width)).collect();
    let (weights, intercept) = weighted_ridge(&x, &y, &w, config.ridge_lambda)?;
    let token_weights = ranking(&weights)
        .into_iter()
        .take(config.n_features)
        .map(|i| (tokens[i].clone(), weights[i]))
        .collect();
    Ok(Explanation {
        target_class: model.classes()[target].clone(),
        probability: original.probs[target],
        token_weights,
        intercept,
        tokens,
        weights,
    })
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// HTML fragment highlighting each token; red supports the class, blue
/// opposes it, opacity scales with the weight.
pub fn render_html(e: &Explanation) -> String {
    let max = e.weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let spans: Vec<String> = e
        .tokens
        .iter()
        .zip(&e.weights)
        .map(|(t, &w)| {
            let alpha = if max > 0.0 { w.abs() / max } else { 0.0 };
            let rgb = if w >= 0.0 { "220,50,47" } else { "38,139,210" };
            format!(
                "<span title=\"{w:.4}\" style=\"background-color: rgba({rgb},{alpha:.3})\">{}</span>",
                escape_html(t)
            )
        })
        .collect();
    format!(
        "<div class=\"explanation\" data-class=\"{}\" data-probability=\"{:.4}\">\n<p>{}</p>\n</div>\n",
        escape_html(&e.target_class),
        e.probability,
        spans.join(" ")
    )
}
