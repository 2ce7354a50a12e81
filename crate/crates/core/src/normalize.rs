//! Tweet-style text normalization.
//!
//! [`normalize`] applies a fixed sequence of rewrites:
//!
//! 1. mentions, hashtags and URLs become placeholders (`<USER>`, `<HASHTAG>`, `<URL>`)
//! 2. everything outside placeholders is lowercased
//! 3. emoji become `:short_name:` strings, padded with single spaces
//! 4. tokens exposed by the emoji padding are checked for entities again
//! 5. typographic characters are folded to ASCII (`’` to `'`, `…` to `...`)
//! 6. clitics are split off (`don't` to `do n't`)
//! 7. time suffixes are detached from digits (`5p.m.` to `5 p.m.`)
//! 8. whitespace is collapsed to single spaces and trimmed
//!
//! The composition is idempotent. Language filtering ([`is_english`]) is not
//! part of [`normalize`]; it is applied at ingestion to drop whole posts.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use once_cell::sync::Lazy;
use regex::Regex;

const EMOJI_TSV: &str = include_str!("../data/emoji.tsv");
const FOLDING_TSV: &str = include_str!("../data/folding.tsv");
const STOPWORDS_TXT: &str = include_str!("../data/stopwords_en.txt");

/// Clitics split off a preceding word, longest first.
pub const CLITICS: [&str; 7] = ["n't", "'ll", "'re", "'ve", "'s", "'m", "'d"];

/// Marker inserted between a text and its topic words.
pub const TOPIC_MARKER: &str = "<TOPIC>";

static TOKEN_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"\S+").unwrap());
static TIME_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"([0-9])([ap]\.m\.|[ap]\.m\b|[ap]m\b)").unwrap());

type Tables = (Arc<EmojiTable>, Arc<Vec<(char, String)>>, Arc<HashSet<String>>);

static DEFAULT_TABLES: Lazy<Tables> =
    Lazy::new(|| {
        (
            Arc::new(EmojiTable::parse(EMOJI_TSV)),
            Arc::new(parse_folding(FOLDING_TSV)),
            Arc::new(parse_stopwords(STOPWORDS_TXT)),
        )
    });

/// Longest-match lookup table from emoji code point sequences to `:name:` strings.
#[derive(Debug, Clone, Default)]
pub struct EmojiTable {
    // first char -> (sequence, name), longest sequence first
    by_first: HashMap<char, Vec<(String, String)>>,
    len: usize,
}

impl EmojiTable {
    /// Parses `sequence<TAB>name` lines; `#` lines and blank lines are skipped.
    pub fn parse(tsv: &str) -> Self {
        let mut table = EmojiTable::default();
        for line in tsv.lines() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let Some((seq, name)) = line.split_once('\t') else {
                continue;
            };
            table.insert(seq, name);
            // lowercasing runs before emoji lookup, so cased symbols like Ⓜ
            // must also be reachable through their lowercase form
            let lower = seq.to_lowercase();
            if lower != seq {
                table.insert(&lower, name);
            }
        }
        for entries in table.by_first.values_mut() {
            entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        }
        table
    }

    fn insert(&mut self, seq: &str, name: &str) {
        let Some(first) = seq.chars().next() else {
            return;
        };
        let entries = self.by_first.entry(first).or_default();
        if entries.iter().any(|(s, _)| s == seq) {
            return;
        }
        entries.push((seq.to_string(), name.to_string()));
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, seq: &str) -> Option<&str> {
        let first = seq.chars().next()?;
        self.by_first
            .get(&first)?
            .iter()
            .find(|(s, _)| s == seq)
            .map(|(_, n)| n.as_str())
    }

    /// Longest table entry that prefixes `text`, with its byte length.
    fn match_prefix(&self, text: &str) -> Option<(usize, &str)> {
        let first = text.chars().next()?;
        self.by_first
            .get(&first)?
            .iter()
            .find(|(s, _)| text.starts_with(s.as_str()))
            .map(|(s, n)| (s.len(), n.as_str()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.by_first
            .values()
            .flatten()
            .map(|(s, n)| (s.as_str(), n.as_str()))
    }
}

fn parse_folding(tsv: &str) -> Vec<(char, String)> {
    tsv.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|l| {
            let mut cols = l.split('\t');
            let from = cols.next()?;
            let to = cols.next()?;
            let mut chars = from.chars();
            let c = chars.next()?;
            chars.next().is_none().then(|| (c, to.to_string()))
        })
        .collect()
}

fn parse_stopwords(txt: &str) -> HashSet<String> {
    txt.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone)]
pub struct NormalizerConfig {
    pub placeholder_user: String,
    pub placeholder_url: String,
    pub placeholder_hashtag: String,
    /// Additional tokens exempt from lowercasing, e.g. [`TOPIC_MARKER`].
    pub extra_placeholders: Vec<String>,
    pub emoji_table: Arc<EmojiTable>,
    pub folding_table: Arc<Vec<(char, String)>>,
    pub clitics: Vec<String>,
    pub english_stopwords: Arc<HashSet<String>>,
    pub english_threshold: f64,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        let (emoji, folding, stopwords) = &*DEFAULT_TABLES;
        NormalizerConfig {
            placeholder_user: "<USER>".into(),
            placeholder_url: "<URL>".into(),
            placeholder_hashtag: "<HASHTAG>".into(),
            extra_placeholders: vec![TOPIC_MARKER.into()],
            emoji_table: emoji.clone(),
            folding_table: folding.clone(),
            clitics: CLITICS.iter().map(|s| s.to_string()).collect(),
            english_stopwords: stopwords.clone(),
            english_threshold: 0.15,
        }
    }
}

impl NormalizerConfig {
    fn placeholders(&self) -> impl Iterator<Item = &str> {
        [
            self.placeholder_user.as_str(),
            self.placeholder_url.as_str(),
            self.placeholder_hashtag.as_str(),
        ]
        .into_iter()
        .chain(self.extra_placeholders.iter().map(String::as_str))
    }

    pub fn is_placeholder(&self, token: &str) -> bool {
        self.placeholders().any(|p| p == token)
    }
}

/// Normalized text. Only produced by [`normalize`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NormalizedText(String);

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl std::fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for NormalizedText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Stopword-density language check. Texts with fewer than three tokens pass.
pub fn is_english(text: &str, config: &NormalizerConfig) -> bool {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() < 3 {
        return true;
    }
    let hits = tokens
        .iter()
        .filter(|t| {
            let word: String = t
                .trim_matches(|c: char| !c.is_alphanumeric())
                .chars()
                .map(|c| if c == '’' { '\'' } else { c })
                .collect::<String>()
                .to_lowercase();
            config.english_stopwords.contains(&word)
        })
        .count();
    hits as f64 / tokens.len() as f64 >= config.english_threshold
}

fn is_url(token: &str) -> bool {
    let head: String = token.chars().take(8).collect::<String>().to_ascii_lowercase();
    head.starts_with("http://") || head.starts_with("https://") || head.starts_with("www.")
}

/// Replaces `@mention`, `#hashtag` and URL tokens with placeholders.
///
/// A token is a maximal run of non-whitespace characters. A bare `@` or `#`
/// is not an entity.
pub fn replace_entities(text: &str, config: &NormalizerConfig) -> String {
    TOKEN_RE
        .replace_all(text, |caps: &regex::Captures| {
            let token = &caps[0];
            if config.is_placeholder(token) {
                token.to_string()
            } else if token.len() > 1 && token.starts_with('@') {
                config.placeholder_user.clone()
            } else if token.len() > 1 && token.starts_with('#') {
                config.placeholder_hashtag.clone()
            } else if is_url(token) {
                config.placeholder_url.clone()
            } else {
                token.to_string()
            }
        })
        .into_owned()
}

/// Lowercases everything except placeholder occurrences.
pub fn lowercase_protected(text: &str, config: &NormalizerConfig) -> String {
    let mut out = String::with_capacity(text.len());
    let mut plain_start = 0;
    let mut i = 0;
    while let Some(off) = text[i..].find('<') {
        let at = i + off;
        let rest = &text[at..];
        match config
            .placeholders()
            .filter(|p| !p.is_empty() && rest.starts_with(p))
            .max_by_key(|p| p.len())
        {
            Some(p) => {
                out.push_str(&text[plain_start..at].to_lowercase());
                out.push_str(p);
                i = at + p.len();
                plain_start = i;
            }
            None => i = at + 1,
        }
    }
    out.push_str(&text[plain_start..].to_lowercase());
    out
}

/// Replaces known emoji with their `:short_name:`, separated from
/// neighbouring non-space text by single spaces. Unknown emoji pass through.
pub fn demojize(text: &str, config: &NormalizerConfig) -> String {
    let table = &config.emoji_table;
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < text.len() {
        let rest = &text[i..];
        if let Some((len, name)) = table.match_prefix(rest) {
            if out.chars().next_back().is_some_and(|c| !c.is_whitespace()) {
                out.push(' ');
            }
            out.push_str(name);
            i += len;
            if text[i..].chars().next().is_some_and(|c| !c.is_whitespace()) {
                out.push(' ');
            }
        } else {
            let c = rest.chars().next().unwrap();
            out.push(c);
            i += c.len_utf8();
        }
    }
    out
}

/// Applies the character folding table.
pub fn fold_characters(text: &str, config: &NormalizerConfig) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match config.folding_table.iter().find(|(from, _)| *from == c) {
            Some((_, to)) => out.push_str(to),
            None => out.push(c),
        }
    }
    out
}

/// Splits trailing clitics off words: `don't` → `do n't`, `it's` → `it 's`.
///
/// A clitic is split only when the remaining stem is non-empty and ends in a
/// letter; peeling repeats until no clitic is left.
pub fn split_contractions(text: &str, config: &NormalizerConfig) -> String {
    TOKEN_RE
        .replace_all(text, |caps: &regex::Captures| {
            let mut token = &caps[0];
            let mut peeled: Vec<&str> = Vec::new();
            'peel: loop {
                for clitic in &config.clitics {
                    if let Some(stem) = token.strip_suffix(clitic.as_str()) {
                        if stem.chars().next_back().is_some_and(char::is_alphabetic) {
                            peeled.push(&token[stem.len()..]);
                            token = stem;
                            continue 'peel;
                        }
                    }
                }
                break;
            }
            let mut out = token.to_string();
            for clitic in peeled.iter().rev() {
                out.push(' ');
                out.push_str(clitic);
            }
            out
        })
        .into_owned()
}

/// Detaches `a.m.`/`p.m.`/`am`/`pm` from a preceding digit.
pub fn space_times(text: &str) -> String {
    TIME_RE.replace_all(text, "$1 $2").into_owned()
}

pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Full normalization; total and idempotent.
pub fn normalize(text: &str, config: &NormalizerConfig) -> NormalizedText {
    let text = replace_entities(text, config);
    let text = lowercase_protected(&text, config);
    let text = demojize(&text, config);
    let text = replace_entities(&text, config);
    let text = fold_characters(&text, config);
    let text = split_contractions(&text, config);
    let text = space_times(&text);
    NormalizedText(collapse_whitespace(&text))
}

/// Shorthand for [`normalize`] with the default configuration.
pub fn normalize_default(text: &str) -> NormalizedText {
    static CONFIG: Lazy<NormalizerConfig> = Lazy::new(NormalizerConfig::default);
    normalize(text, &CONFIG)
}
