//! Dataset ingestion: posts, labeled examples, loaders and splits.

mod loaders;
mod records;
mod split;

use std::fmt;
use std::fs::File;
use std::hash::Hash;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalize::{normalize, NormalizerConfig};

pub use loaders::{
    filter_english, hatexplain_target, load_dialoconan, load_hatexplain, load_parler, load_tap,
    load_toxigen, dialoconan_target, stream_posts, tap_target, toxigen_group, CorpusLoader,
    Loaded, ToxigenVariant,
};
pub use records::RowError;
pub use split::{round_half_up, split, SplitConfig, SplitOutcome};

/// A raw social-media post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disputable: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
}

/// Label types usable as classifier outputs.
pub trait Label:
    Clone + Eq + Ord + Hash + fmt::Debug + fmt::Display + FromStr + Send + Sync + 'static
{
}

impl<T> Label for T where
    T: Clone + Eq + Ord + Hash + fmt::Debug + fmt::Display + FromStr + Send + Sync + 'static
{
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HateLabel {
    Hate,
    Normal,
}

impl HateLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            HateLabel::Hate => "hate",
            HateLabel::Normal => "normal",
        }
    }
}

impl fmt::Display for HateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HateLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hate" => Ok(HateLabel::Hate),
            "normal" => Ok(HateLabel::Normal),
            _ => Err(Error::UnknownLabel {
                label: s.to_string(),
                known: "hate, normal".into(),
            }),
        }
    }
}

/// Target group of a hateful post.
///
/// `Politician` only occurs in raw TAP annotations; the model space is
/// [`TargetClass::MODEL_SPACE`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TargetClass {
    African,
    Islam,
    Jewish,
    #[serde(rename = "LGBT")]
    Lgbt,
    Politician,
    Other,
}

impl TargetClass {
    pub const MODEL_SPACE: [TargetClass; 5] = [
        TargetClass::African,
        TargetClass::Islam,
        TargetClass::Jewish,
        TargetClass::Lgbt,
        TargetClass::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TargetClass::African => "African",
            TargetClass::Islam => "Islam",
            TargetClass::Jewish => "Jewish",
            TargetClass::Lgbt => "LGBT",
            TargetClass::Politician => "Politician",
            TargetClass::Other => "Other",
        }
    }

    /// Maps `Politician` onto `Other`.
    pub fn fold_politician(self) -> Self {
        match self {
            TargetClass::Politician => TargetClass::Other,
            c => c,
        }
    }

    pub fn in_model_space(self) -> bool {
        self != TargetClass::Politician
    }
}

impl fmt::Display for TargetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            TargetClass::African,
            TargetClass::Islam,
            TargetClass::Jewish,
            TargetClass::Lgbt,
            TargetClass::Politician,
            TargetClass::Other,
        ];
        all.into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownLabel {
                label: s.to_string(),
                known: "African, Islam, Jewish, LGBT, Politician, Other".into(),
            })
    }
}

/// A normalized text with a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(bound(serialize = "L: Serialize", deserialize = "L: DeserializeOwned"))]
pub struct Example<L> {
    pub text: String,
    pub label: L,
    pub origin: String,
    #[serde(default)]
    pub augmented: bool,
}

impl<L> Example<L> {
    pub fn new(text: impl Into<String>, label: L, origin: impl Into<String>) -> Self {
        Example {
            text: text.into(),
            label,
            origin: origin.into(),
            augmented: false,
        }
    }
}

pub type LabeledExample = Example<HateLabel>;
pub type TargetExample = Example<TargetClass>;

/// Hate/normal decision rule for label means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdRule {
    /// `label_mean >= threshold`
    #[default]
    Inclusive,
    /// `label_mean > threshold`
    Strict,
}

/// Binarizes a post with the inclusive rule and normalizes its text.
pub fn binarize(post: &Post, threshold: f64) -> Result<LabeledExample> {
    binarize_with(post, threshold, ThresholdRule::Inclusive, &NormalizerConfig::default())
}

pub fn binarize_with(
    post: &Post,
    threshold: f64,
    rule: ThresholdRule,
    normalizer: &NormalizerConfig,
) -> Result<LabeledExample> {
    let mean = post
        .label_mean
        .ok_or_else(|| Error::Unlabeled(post.id.clone()))?;
    let hate = match rule {
        ThresholdRule::Inclusive => mean >= threshold,
        ThresholdRule::Strict => mean > threshold,
    };
    let label = if hate { HateLabel::Hate } else { HateLabel::Normal };
    Ok(Example::new(
        normalize(&post.text, normalizer).into_string(),
        label,
        "parler",
    ))
}

/// Writes one JSON document per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a JSON-lines file; blank lines are skipped, any bad line is an error.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Row {
            row: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
