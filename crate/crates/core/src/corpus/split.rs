use std::collections::BTreeMap;
use std::fmt::Display;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Example;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.8,
            seed: 0,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitOutcome<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub warnings: Vec<String>,
}

/// `floor(x + 1/2)`, tolerant to representation error just below a half.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5 + 1e-9).floor().max(0.0) as usize
}

/// Seeded train/test partition.
///
/// Train size is `round_half_up(n * train_fraction)`, per class when
/// stratified. Classes with fewer than two examples go wholly to train.
/// Augmented examples always go to train. Both halves keep input order.
pub fn split<L: Display + Clone>(
    data: &[Example<L>],
    config: &SplitConfig,
) -> Result<SplitOutcome<Example<L>>> {
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty dataset".into()));
    }
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train_fraction must lie in (0, 1), got {}",
            config.train_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut in_train = vec![false; data.len()];
    let mut warnings = Vec::new();

    let originals: Vec<usize> = (0..data.len()).filter(|&i| !data[i].augmented).collect();
    for (i, ex) in data.iter().enumerate() {
        if ex.augmented {
            in_train[i] = true;
        }
    }

    let groups: Vec<(String, Vec<usize>)> = if config.stratified {
        let mut by_class: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for &i in &originals {
            by_class.entry(data[i].label.to_string()).or_default().push(i);
        }
        by_class.into_iter().collect()
    } else {
        vec![(String::new(), originals)]
    };

    for (class, mut idx) in groups {
        if config.stratified && idx.len() < 2 {
            let msg = format!("class {class:?} has {} example(s); placed in train", idx.len());
            warn!("{msg}");
            warnings.push(msg);
            for i in idx {
                in_train[i] = true;
            }
            continue;
        }
        idx.shuffle(&mut rng);
        let n_train = round_half_up(idx.len() as f64 * config.train_fraction).min(idx.len());
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (ex, t) in data.iter().zip(in_train) {
        if t {
            train.push(ex.clone());
        } else {
            test.push(ex.clone());
        }
    }
    Ok(SplitOutcome {
        train,
        test,
        warnings,
    })
}
