//! Loaders for the Parler, HateXplain, DIALOCONAN, ToxiGen and TAP corpora.
//!
//! Field names for each format are listed in `docs/schemas/`. Every loader
//! collects row-level failures instead of stopping at the first one, and
//! aborts only when more than 10% of the rows are bad.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;

use super::records::{
    get_bool, get_f64, get_str, get_str_list, records, require_str, Record, RowError,
};
use super::{Example, Post, TargetClass, TargetExample};
use crate::error::{Error, Result};
use crate::normalize::{is_english, normalize, NormalizerConfig};

/// Loader output with row-level bookkeeping.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub items: Vec<T>,
    /// Rows seen, including rejected ones.
    pub rows: usize,
    pub errors: Vec<RowError>,
    pub warnings: Vec<String>,
    /// Records without an annotation majority.
    pub dropped: usize,
    /// Records removed by a dataset filter (toxicity, agreement, label).
    pub filtered: usize,
    /// Records removed by the English filter.
    pub excluded: usize,
}

impl<T> Loaded<T> {
    fn new() -> Self {
        Loaded {
            items: Vec::new(),
            rows: 0,
            errors: Vec::new(),
            warnings: Vec::new(),
            dropped: 0,
            filtered: 0,
            excluded: 0,
        }
    }

    fn finish(mut self, path: &Path) -> Result<Self> {
        if self.rows == 0 {
            warn!("{}: no records", path.display());
            self.warnings.push("empty file".into());
        }
        if self.errors.len() * 10 > self.rows {
            return Err(Error::TooManyBadRows {
                path: path.to_path_buf(),
                failed: self.errors.len(),
                total: self.rows,
                first: self.errors[0].to_string(),
            });
        }
        for e in &self.errors {
            warn!("{}: {}", path.display(), e);
        }
        Ok(self)
    }
}

enum RowOutcome<T> {
    Keep(T),
    Dropped,
    Filtered,
    Excluded,
}

fn load_with<T>(
    path: &Path,
    mut parse: impl FnMut(usize, &Record, &mut Vec<String>) -> std::result::Result<RowOutcome<T>, String>,
) -> Result<Loaded<T>> {
    let mut out = Loaded::new();
    for (row, rec) in records(path)? {
        out.rows += 1;
        let parsed = rec.and_then(|r| parse(row, &r, &mut out.warnings));
        match parsed {
            Ok(RowOutcome::Keep(item)) => out.items.push(item),
            Ok(RowOutcome::Dropped) => out.dropped += 1,
            Ok(RowOutcome::Filtered) => out.filtered += 1,
            Ok(RowOutcome::Excluded) => out.excluded += 1,
            Err(message) => out.errors.push(RowError { row, message }),
        }
    }
    out.finish(path)
}

fn parse_post(row: usize, rec: &Record) -> std::result::Result<Post, String> {
    let text = require_str(rec, &["text", "body"])?;
    if text.trim().is_empty() {
        return Err("empty text".into());
    }
    let label_mean = get_f64(rec, &["label_mean", "mean"])?;
    if let Some(m) = label_mean {
        if !(1.0..=5.0).contains(&m) {
            return Err(format!("label_mean {m} outside [1, 5]"));
        }
    }
    Ok(Post {
        id: get_str(rec, &["id", "post_id"]).unwrap_or_else(|| row.to_string()),
        text,
        label_mean,
        disputable: get_bool(rec, &["disputable"])?,
        user_id: get_str(rec, &["user_id", "username"]),
    })
}

/// Streams Parler posts without holding the file in memory.
pub fn stream_posts(
    path: impl AsRef<Path>,
) -> Result<impl Iterator<Item = std::result::Result<Post, RowError>> + Send> {
    Ok(records(path.as_ref())?.map(|(row, rec)| {
        rec.and_then(|r| parse_post(row, &r))
            .map_err(|message| RowError { row, message })
    }))
}

/// Loads annotated Parler posts (JSON-lines, or CSV with a header row).
pub fn load_parler(path: impl AsRef<Path>) -> Result<Loaded<Post>> {
    let path = path.as_ref();
    load_with(path, |row, rec, _| parse_post(row, rec).map(RowOutcome::Keep))
}

/// Drops posts that fail the stopword-density English check.
pub fn filter_english(posts: Vec<Post>, config: &NormalizerConfig) -> (Vec<Post>, usize) {
    let before = posts.len();
    let kept: Vec<Post> = posts
        .into_iter()
        .filter(|p| is_english(&p.text, config))
        .collect();
    let excluded = before - kept.len();
    (kept, excluded)
}

/// Maps a HateXplain community name onto the model target space.
pub fn hatexplain_target(name: &str) -> TargetClass {
    match name.trim().to_ascii_lowercase().as_str() {
        "african" | "black" | "african american" => TargetClass::African,
        "islam" | "muslim" | "muslims" => TargetClass::Islam,
        "jewish" | "jews" | "jew" => TargetClass::Jewish,
        "homosexual" | "gay" | "lgbt" | "lgbtq" | "lgbt+" => TargetClass::Lgbt,
        _ => TargetClass::Other,
    }
}

/// Maps a DIALOCONAN dialogue target; `None` for unrecognised strings.
pub fn dialoconan_target(name: &str) -> Option<TargetClass> {
    match name.trim().to_ascii_uppercase().as_str() {
        "JEWS" => Some(TargetClass::Jewish),
        "LGBT+" | "LGBT" | "LGBTQ" | "LGBTQ+" => Some(TargetClass::Lgbt),
        "MUSLIMS" => Some(TargetClass::Islam),
        "POC" | "PEOPLE OF COLOR" | "PEOPLE_OF_COLOR" => Some(TargetClass::African),
        "MIGRANTS" | "WOMEN" => Some(TargetClass::Other),
        _ => None,
    }
}

/// Maps one of the ToxiGen minority group tags.
pub fn toxigen_group(group: &str) -> TargetClass {
    match group.trim().to_ascii_lowercase().as_str() {
        "black" | "african" | "african_american" | "black_people" => TargetClass::African,
        "muslim" | "muslims" => TargetClass::Islam,
        "jewish" | "jews" => TargetClass::Jewish,
        "lgbtq" | "lgbt" | "lgbtq+" => TargetClass::Lgbt,
        _ => TargetClass::Other,
    }
}

/// Maps a TAP annotation class; `None` for unknown strings.
pub fn tap_target(name: &str) -> Option<TargetClass> {
    match name.trim().to_ascii_lowercase().as_str() {
        "jewish" | "jews" => Some(TargetClass::Jewish),
        "islam" | "muslim" | "muslims" => Some(TargetClass::Islam),
        "homosexual" | "lgbt" => Some(TargetClass::Lgbt),
        "african" | "black" => Some(TargetClass::African),
        "politician" | "politicians" => Some(TargetClass::Politician),
        "other" => Some(TargetClass::Other),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToxigenVariant {
    /// Human-annotated sample; filtered on toxicity and agreement.
    Small,
    /// Machine-generated statements with group tags.
    Large,
}

/// Loader settings shared by the target-classification corpora.
#[derive(Debug, Clone, Default)]
pub struct CorpusLoader {
    pub normalizer: NormalizerConfig,
    /// Exclude records failing [`is_english`] before labeling.
    pub english_only: bool,
    /// HateXplain: keep only records whose majority label is hate speech.
    pub hate_only: bool,
}

impl CorpusLoader {
    fn example(
        &self,
        text: &str,
        target: TargetClass,
        origin: &str,
    ) -> RowOutcome<TargetExample> {
        if self.english_only && !is_english(text, &self.normalizer) {
            return RowOutcome::Excluded;
        }
        RowOutcome::Keep(Example::new(
            normalize(text, &self.normalizer).into_string(),
            target,
            origin,
        ))
    }

    fn text_of(rec: &Record) -> std::result::Result<String, String> {
        let text = match get_str_list(rec, &["post_tokens"]) {
            Some(tokens) if rec.get("text").is_none() => tokens.join(" "),
            _ => require_str(rec, &["text", "generation"])?,
        };
        if text.trim().is_empty() {
            return Err("empty text".into());
        }
        Ok(text)
    }

    /// HateXplain: three annotations per record, resolved by strict majority
    /// after mapping each annotation onto the model space. Records with no
    /// majority are dropped and counted.
    pub fn load_hatexplain(&self, path: impl AsRef<Path>) -> Result<Loaded<TargetExample>> {
        load_with(path.as_ref(), |_, rec, _| {
            let text = Self::text_of(rec)?;
            let (targets, labels) = hatexplain_annotations(rec)?;
            if targets.len() != 3 {
                return Err(format!("expected 3 annotations, found {}", targets.len()));
            }
            if self.hate_only {
                let hate_votes = labels
                    .iter()
                    .filter(|l| matches!(l.to_ascii_lowercase().as_str(), "hatespeech" | "hate"))
                    .count();
                if hate_votes < 2 {
                    return Ok(RowOutcome::Filtered);
                }
            }
            match majority(&targets) {
                Some(t) => Ok(self.example(&text, t, "hatexplain")),
                None => Ok(RowOutcome::Dropped),
            }
        })
    }

    /// DIALOCONAN: hater turns become examples labeled with the dialogue target.
    pub fn load_dialoconan(&self, path: impl AsRef<Path>) -> Result<Loaded<TargetExample>> {
        let mut unknown = 0usize;
        let mut loaded = load_with(path.as_ref(), |_, rec, _| {
            let text = Self::text_of(rec)?;
            let role = require_str(rec, &["type", "speaker", "role"])?;
            let hater = match role.trim().to_ascii_uppercase().as_str() {
                "HS" | "HATER" => true,
                "CN" | "NGO" | "OPERATOR" => false,
                other => return Err(format!("unknown speaker role {other:?}")),
            };
            let raw_target = require_str(rec, &["target", "TARGET"])?;
            let target = dialoconan_target(&raw_target).unwrap_or_else(|| {
                unknown += 1;
                TargetClass::Other
            });
            if !hater {
                return Ok(RowOutcome::Filtered);
            }
            Ok(self.example(&text, target, "dialoconan"))
        })?;
        if unknown > 0 {
            warn!("{unknown} turns with unknown target mapped to Other");
            loaded
                .warnings
                .push(format!("{unknown} turns with unknown target mapped to Other"));
        }
        Ok(loaded)
    }

    /// ToxiGen. The small variant keeps rows with toxicity >= 4 and full
    /// annotator agreement; the large variant keeps every row.
    pub fn load_toxigen(
        &self,
        path: impl AsRef<Path>,
        variant: ToxigenVariant,
    ) -> Result<Loaded<TargetExample>> {
        load_with(path.as_ref(), |_, rec, _| {
            let text = Self::text_of(rec)?;
            let group = require_str(rec, &["target_group", "group"])?;
            let target = toxigen_group(&group);
            let origin = match variant {
                ToxigenVariant::Small => {
                    let toxicity = get_f64(rec, &["toxicity", "toxicity_human"])?
                        .ok_or("missing field \"toxicity\"")?;
                    let agreement = get_bool(rec, &["agreement", "full_agreement"])?
                        .ok_or("missing field \"agreement\"")?;
                    if toxicity < 4.0 || !agreement {
                        return Ok(RowOutcome::Filtered);
                    }
                    "toxigen-small"
                }
                ToxigenVariant::Large => "toxigen-large",
            };
            Ok(self.example(&text, target, origin))
        })
    }

    /// TAP: six-class annotations; `fold_politician` maps Politician to Other.
    pub fn load_tap(
        &self,
        path: impl AsRef<Path>,
        fold_politician: bool,
    ) -> Result<Loaded<TargetExample>> {
        load_with(path.as_ref(), |_, rec, _| {
            let text = Self::text_of(rec)?;
            let raw = require_str(rec, &["target", "class", "label"])?;
            let mut target = tap_target(&raw).ok_or_else(|| format!("unknown TAP class {raw:?}"))?;
            if fold_politician {
                target = target.fold_politician();
            }
            Ok(self.example(&text, target, "tap"))
        })
    }
}

fn hatexplain_annotations(rec: &Record) -> std::result::Result<(Vec<TargetClass>, Vec<String>), String> {
    if let Some(targets) = get_str_list(rec, &["targets"]) {
        return Ok((targets.iter().map(|t| hatexplain_target(t)).collect(), Vec::new()));
    }
    let list = rec
        .get("annotators")
        .or_else(|| rec.get("annotations"))
        .and_then(|v| v.as_array())
        .ok_or("missing field \"targets\"")?;
    let mut targets = Vec::with_capacity(list.len());
    let mut labels = Vec::with_capacity(list.len());
    for ann in list {
        let obj = ann.as_object().ok_or("annotation is not an object")?;
        let names = get_str_list(obj, &["target"]).ok_or("annotation without target")?;
        let mapped = names
            .iter()
            .map(|n| hatexplain_target(n))
            .find(|t| *t != TargetClass::Other)
            .unwrap_or(TargetClass::Other);
        targets.push(mapped);
        if let Some(l) = get_str(obj, &["label"]) {
            labels.push(l);
        }
    }
    Ok((targets, labels))
}

/// Strict majority; `None` when no class has more than half the votes.
fn majority(votes: &[TargetClass]) -> Option<TargetClass> {
    let mut counts: BTreeMap<TargetClass, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(*v).or_default() += 1;
    }
    counts
        .into_iter()
        .find(|(_, n)| 2 * n > votes.len())
        .map(|(c, _)| c)
}

pub fn load_hatexplain(path: impl AsRef<Path>) -> Result<Loaded<TargetExample>> {
    CorpusLoader::default().load_hatexplain(path)
}

pub fn load_dialoconan(path: impl AsRef<Path>) -> Result<Loaded<TargetExample>> {
    CorpusLoader::default().load_dialoconan(path)
}

pub fn load_toxigen(path: impl AsRef<Path>, variant: ToxigenVariant) -> Result<Loaded<TargetExample>> {
    CorpusLoader::default().load_toxigen(path, variant)
}

pub fn load_tap(path: impl AsRef<Path>, fold_politician: bool) -> Result<Loaded<TargetExample>> {
    CorpusLoader::default().load_tap(path, fold_politician)
}
