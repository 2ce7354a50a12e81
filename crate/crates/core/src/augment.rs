//! Back-translation augmentation.
//!
//! Each training text is translated to a pivot language and back, cleaned
//! and kept as an extra example when the round trip looks sane.

use std::collections::HashMap;
use std::fmt::Display;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::normalize::{normalize, NormalizerConfig};

/// A machine translation backend.
pub trait TranslationClient: Send + Sync {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String>;

    /// Translates a batch, preserving order, with at most `max_parallel`
    /// requests in flight.
    fn translate_batch(&self, texts: &[String], source: &str, target: &str, max_parallel: usize) -> Vec<Result<String>> {
        let workers = max_parallel.clamp(1, texts.len().max(1));
        let chunk = texts.len().div_ceil(workers).max(1);
        std::thread::scope(|s| {
            let handles: Vec<_> = texts
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|t| self.translate(t, source, target)).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("translation worker panicked")).collect()
        })
    }
}

impl<T: TranslationClient + ?Sized> TranslationClient for &T {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        (**self).translate(text, source, target)
    }
}

/// JSON-over-HTTP client: `POST {"text", "source", "target"}` returning `{"text"}`.
pub struct HttpTranslationClient {
    endpoint: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct TranslationRequest<'a> {
    text: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct TranslationResponse {
    text: String,
}

impl HttpTranslationClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpTranslationClient {
            endpoint: endpoint.into(),
            agent,
        }
    }
}

impl TranslationClient for HttpTranslationClient {
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        let resp: TranslationResponse = self
            .agent
            .post(&self.endpoint)
            .send_json(TranslationRequest { text, source, target })
            .map_err(|e| Error::Translation(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| Error::Translation(e.to_string()))?;
        Ok(resp.text)
    }
}

/// Deterministic client backed by a lookup table keyed by (text, target language).
///
/// The fixture format is tab-separated `input<TAB>target_lang<TAB>output`,
/// one mapping per line; `#` starts a comment line.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClient {
    table: HashMap<(String, String), String>,
}

impl ScriptedClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, text: impl Into<String>, target: impl Into<String>, output: impl Into<String>) {
        self.table.insert((text.into(), target.into()), output.into());
    }

    pub fn parse(tsv: &str) -> Result<Self> {
        let mut client = ScriptedClient::new();
        for (i, line) in tsv.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Row {
                    row: i + 1,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            client.insert(fields[0], fields[1], fields[2]);
        }
        Ok(client)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl TranslationClient for ScriptedClient {
    fn translate(&self, text: &str, _source: &str, target: &str) -> Result<String> {
        self.table
            .get(&(text.to_string(), target.to_string()))
            .cloned()
            .ok_or_else(|| Error::Translation(format!("no scripted translation of {text:?} into {target}")))
    }
}

/// Returns the input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityClient;

impl TranslationClient for IdentityClient {
    fn translate(&self, text: &str, _source: &str, _target: &str) -> Result<String> {
        Ok(text.to_string())
    }
}

/// Wraps a closure as a client.
pub struct FnClient<F>(pub F);

impl<F> TranslationClient for FnClient<F>
where
    F: Fn(&str, &str, &str) -> Result<String> + Send + Sync,
{
    fn translate(&self, text: &str, source: &str, target: &str) -> Result<String> {
        (self.0)(text, source, target)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub source_lang: String,
    pub languages: Vec<String>,
    pub max_parallel: usize,
    /// Accepted range of output/input character-length ratio.
    pub min_length_ratio: f64,
    pub max_length_ratio: f64,
    /// Largest accepted fraction of non-ASCII characters in the output.
    pub max_non_ascii: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            source_lang: "en".into(),
            languages: vec!["es".into(), "de".into(), "fr".into()],
            max_parallel: 8,
            min_length_ratio: 0.3,
            max_length_ratio: 3.0,
            max_non_ascii: 0.2,
        }
    }
}

/// Collapses immediate repetitions of a word: "the the cat" -> "the cat".
pub fn remove_duplicate_words(text: &str) -> String {
    let mut out: Vec<&str> = Vec::new();
    for w in text.split_whitespace() {
        if out.last() != Some(&w) {
            out.push(w);
        }
    }
    out.join(" ")
}

/// Why a round trip was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    Empty,
    LengthRatio,
    NonAscii,
    Unchanged,
}

/// Heuristic check of a round-trip result against its source.
pub fn detect_failed_translation(original: &str, result: &str, config: &AugmentConfig) -> Option<Rejection> {
    let out_len = result.chars().count();
    if result.trim().is_empty() {
        return Some(Rejection::Empty);
    }
    let in_len = original.chars().count().max(1);
    let ratio = out_len as f64 / in_len as f64;
    if ratio < config.min_length_ratio || ratio > config.max_length_ratio {
        return Some(Rejection::LengthRatio);
    }
    let non_ascii = result.chars().filter(|c| !c.is_ascii()).count();
    if non_ascii as f64 / out_len as f64 > config.max_non_ascii {
        return Some(Rejection::NonAscii);
    }
    if result == original {
        return Some(Rejection::Unchanged);
    }
    None
}

/// Round trip `text` through `lang` and clean the result.
pub fn back_translate(
    client: &dyn TranslationClient,
    text: &str,
    lang: &str,
    config: &AugmentConfig,
    normalizer: &NormalizerConfig,
) -> Result<String> {
    let forward = client.translate(text, &config.source_lang, lang)?;
    let back = client.translate(&forward, lang, &config.source_lang)?;
    Ok(normalize(&remove_duplicate_words(&back), normalizer).into_string())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageReport {
    pub language: String,
    pub attempted: usize,
    pub accepted: usize,
    pub client_errors: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub originals: usize,
    pub languages: Vec<LanguageReport>,
}

impl AugmentReport {
    pub fn added(&self) -> usize {
        self.languages.iter().map(|l| l.accepted).sum()
    }

    pub fn failures(&self) -> usize {
        self.languages.iter().map(|l| l.client_errors + l.rejected).sum()
    }
}

/// Returns the originals followed by every accepted back-translation,
/// grouped by language in configuration order. Augmented copies keep the
/// label and origin of their source and have `augmented = true`.
pub fn augment_dataset<L: Clone + Display + Send + Sync>(
    examples: &[Example<L>],
    client: &dyn TranslationClient,
    config: &AugmentConfig,
    normalizer: &NormalizerConfig,
) -> Result<(Vec<Example<L>>, AugmentReport)> {
    let mut out: Vec<Example<L>> = examples.to_vec();
    let mut report = AugmentReport {
        originals: examples.len(),
        languages: Vec::new(),
    };
    let sources: Vec<&Example<L>> = examples.iter().filter(|e| !e.augmented).collect();
    let texts: Vec<String> = sources.iter().map(|e| e.text.clone()).collect();
    for lang in &config.languages {
        let errors = AtomicUsize::new(0);
        let forward = client.translate_batch(&texts, &config.source_lang, lang, config.max_parallel);
        // keep positions aligned; failed forwards are skipped on the way back
        let ok_forward: Vec<(usize, String)> = forward
            .into_iter()
            .enumerate()
            .filter_map(|(i, r)| match r {
                Ok(t) => Some((i, t)),
                Err(e) => {
                    errors.fetch_add(1, Ordering::Relaxed);
                    warn!("forward translation to {lang} failed: {e}");
                    None
                }
            })
            .collect();
        let mids: Vec<String> = ok_forward.iter().map(|(_, t)| t.clone()).collect();
        let back = client.translate_batch(&mids, lang, &config.source_lang, config.max_parallel);
        let mut lr = LanguageReport {
            language: lang.clone(),
            attempted: texts.len(),
            ..Default::default()
        };
        for ((i, _), r) in ok_forward.iter().zip(back) {
            let back = match r {
                Ok(t) => t,
                Err(e) => {
                    errors.fetch_add(1, Ordering::Relaxed);
                    warn!("back translation from {lang} failed: {e}");
                    continue;
                }
            };
            let cleaned = normalize(&remove_duplicate_words(&back), normalizer).into_string();
            let source = sources[*i];
            if detect_failed_translation(&source.text, &cleaned, config).is_some() {
                lr.rejected += 1;
                continue;
            }
            let mut copy = source.clone();
            copy.text = cleaned;
            copy.augmented = true;
            out.push(copy);
            lr.accepted += 1;
        }
        lr.client_errors = errors.into_inner();
        info!(
            "{lang}: {} accepted, {} rejected, {} client errors of {}",
            lr.accepted, lr.rejected, lr.client_errors, lr.attempted
        );
        report.languages.push(lr);
    }
    Ok((out, report))
}
