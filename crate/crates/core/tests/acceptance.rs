//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hatetarget::augment::{augment_dataset, AugmentConfig, IdentityClient, ScriptedClient};
use hatetarget::corpus::{
    load_parler, load_toxigen, round_half_up, split, Example, HateLabel, Post, RowError, SplitConfig,
    TargetClass, ToxigenVariant,
};
use hatetarget::eval::{metrics, ConfusionMatrix};
use hatetarget::explain::{lime_explain, ExplainConfig};
use hatetarget::model::{
    self, train, weighted_ce_loss, Classifier, FeatureConfig, Hyperparams, TrainedClassifier,
};
use hatetarget::normalize::{is_english, normalize, NormalizerConfig};
use hatetarget::pipeline::{run_corpus, Pipeline, RunConfig};
use hatetarget::topics::{cluster, fit_topics, ClusterParams, Embedder, TfidfProjectionEmbedder, TopicModel, OUTLIER};
use hatetarget::{Error, Result};

type Outcome = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn data_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data"))
}

// 1. normalizer goldens and idempotence

fn unescape(s: &str) -> String {
    s.replace("\\t", "\t").replace("\\n", "\n")
}

/// Strings mixing ASCII, entities, emoji, foldable punctuation, clock
/// times, whitespace and arbitrary code points.
pub fn random_text(rng: &mut impl Rng) -> String {
    const PIECES: &[&str] = &[
        "@", "#", "http://", "www.", "😂", "❤️", "🔥", "👍🏽", "’", "‘", "“", "”", "…", "–", "—", "•",
        "n't", "'s", "'ll", "DON'T", "5p.m.", "7AM", "a.m.", "pm", " ", "  ", "\t", "\n", "<USER>",
        "<URL>", "<HASHTAG>", "<TOPIC>", "Ⓐ", "İ", "ß", "ﬁ", "ǅ", "\u{200b}", "\u{fe0f}", ":", "'",
    ];
    let len = rng.random_range(0..12);
    let mut s = String::new();
    for _ in 0..len {
        match rng.random_range(0..4) {
            0 => s.push_str(PIECES.choose(rng).unwrap()),
            1 => {
                let n = rng.random_range(1..6);
                for _ in 0..n {
                    s.push(rng.random_range(b'!'..=b'~') as char);
                }
            }
            2 => {
                if let Some(c) = char::from_u32(rng.random_range(0..0x2_0000)) {
                    s.push(c);
                }
            }
            _ => s.push_str(["The", "cat", "IS", "it", "x"].choose(rng).unwrap()),
        }
    }
    s
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let config = NormalizerConfig::default();
    let golden = std::fs::read_to_string(data_dir().join("normalize_golden.tsv")).map_err(|e| e.to_string())?;
    let mut pairs = 0;
    for (i, line) in golden.lines().enumerate() {
        if line.starts_with('#') {
            continue;
        }
        let (raw, expected) = line.split_once('\t').ok_or(format!("line {}: no tab", i + 1))?;
        let got = normalize(&unescape(raw), &config);
        ensure!(got.as_str() == expected, "line {}: {raw:?} -> {:?}, expected {expected:?}", i + 1, got.as_str());
        pairs += 1;
    }
    ensure!(pairs >= 25, "only {pairs} golden pairs");
    // language exclusion is a filter rather than a rewrite
    ensure!(is_english("the cat is on the mat", &config), "English sentence rejected");
    ensure!(!is_english("el gato está en la alfombra", &config), "Spanish sentence accepted");
    ensure!(is_english("ok", &config), "short text rejected");

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let x = random_text(&mut rng);
        let once = normalize(&x, &config);
        let twice = normalize(once.as_str(), &config);
        ensure!(once == twice, "not idempotent on {x:?}: {:?} vs {:?}", once.as_str(), twice.as_str());
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(format!("{pairs} goldens, 10000 idempotence draws in {:.2}s", elapsed.as_secs_f64()))
}

// 2. metrics against direct formulas

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for tp in 0..=5u64 {
        for fn_ in 0..=5u64 {
            for fp in 0..=5u64 {
                for tn in 0..=5u64 {
                    let m = metrics(&ConfusionMatrix::binary(tp, fn_, fp, tn), Some("positive")).map_err(|e| e.to_string())?;
                    let (tp, fn_, fp, tn) = (tp as f64, fn_ as f64, fp as f64, tn as f64);
                    let oracle = [
                        safe_div(tp + tn, tp + fn_ + fp + tn),
                        safe_div(tp, tp + fp),
                        safe_div(tp, tp + fn_),
                        safe_div(2.0 * tp, 2.0 * tp + fp + fn_),
                    ];
                    let got = [m.accuracy, m.precision, m.recall, m.f1];
                    for (a, b) in got.iter().zip(oracle) {
                        worst = worst.max((a - b).abs());
                    }
                    cases += 1;
                }
            }
        }
    }
    ensure!(cases == 1296, "{cases} cases");
    ensure!(worst <= 1e-12, "max abs error {worst:e}");

    // precision 76/129 = 0.589, recall 76/100 = 0.76
    let m = metrics(&ConfusionMatrix::binary(76, 24, 53, 155), Some("positive")).map_err(|e| e.to_string())?;
    let row: Vec<i64> = [m.accuracy, m.recall, m.precision, m.f1]
        .iter()
        .map(|x| (x * 100.0).round() as i64)
        .collect();
    ensure!(row == [75, 76, 59, 66], "spot check gave {row:?}");
    Ok(format!("1296 matrices, max error {worst:e}; spot check {row:?}"))
}

// 3. gradient check

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(2..=6);
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..3.0)).collect();
        let y = rng.random_range(0..k);
        let (_, grad) = weighted_ce_loss(&logits, y, &weights);
        // independent loss: -w_y * ln(softmax_y) computed directly
        let loss_at = |z: &[f64]| {
            let denom: f64 = z.iter().map(|v| v.exp()).sum();
            -weights[y] * (z[y].exp() / denom).ln()
        };
        let h = 1e-5;
        for i in 0..k {
            let mut plus = logits.clone();
            let mut minus = logits.clone();
            plus[i] += h;
            minus[i] -= h;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    ensure!(worst < 1e-4, "worst relative error {worst:e}");
    Ok(format!("100 draws, worst relative error {worst:.2e}"))
}

// 4. weighted loss raises minority recall

fn synthetic_imbalanced(n: usize, rng: &mut ChaCha8Rng) -> Vec<Example<HateLabel>> {
    let shared: Vec<String> = (0..40).map(|i| format!("common{i}")).collect();
    let cues: Vec<String> = (0..6).map(|i| format!("cue{i}")).collect();
    (0..n)
        .map(|_| {
            let minority = rng.random_bool(0.1);
            // cue words are more frequent in the minority class but occur in both
            let p_cue = if minority { 0.3 } else { 0.08 };
            let words: Vec<String> = (0..10)
                .map(|_| {
                    if rng.random_bool(p_cue) {
                        cues.choose(rng).unwrap().clone()
                    } else {
                        shared.choose(rng).unwrap().clone()
                    }
                })
                .collect();
            let label = if minority { HateLabel::Hate } else { HateLabel::Normal };
            Example::new(words.join(" "), label, "synthetic")
        })
        .collect()
}

fn minority_recall(model: &TrainedClassifier, test: &[Example<HateLabel>]) -> f64 {
    let positives: Vec<&Example<HateLabel>> = test.iter().filter(|e| e.label == HateLabel::Hate).collect();
    let hits = positives.iter().filter(|e| model.predict(&e.text).label == "hate").count();
    hits as f64 / positives.len() as f64
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let fc = FeatureConfig {
        hash_dim: 1 << 12,
        word_ngrams: vec![1],
        char_ngrams: vec![],
        hash_seed: 0,
    };
    let mut gains = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let train_set = synthetic_imbalanced(2000, &mut rng);
        let test_set = synthetic_imbalanced(2000, &mut rng);
        let run = |weighted: bool| -> Result<f64> {
            let hp = Hyperparams {
                weighted_loss: weighted,
                seed,
                ..Default::default()
            };
            Ok(minority_recall(&train(&train_set, &[], &hp, &fc)?, &test_set))
        };
        let (plain, weighted) = (run(false).map_err(|e| e.to_string())?, run(true).map_err(|e| e.to_string())?);
        gains.push((weighted - plain, plain, weighted));
    }
    let elapsed = start.elapsed();
    let wins = gains.iter().filter(|g| g.0 > 0.0).count();
    let mut sorted: Vec<f64> = gains.iter().map(|g| g.0).collect();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[2];
    let summary: Vec<String> = gains
        .iter()
        .map(|(_, p, w)| format!("{:.0}->{:.0}", 100.0 * p, 100.0 * w))
        .collect();
    ensure!(wins >= 4, "weighted recall higher in only {wins}/5 seeds ({summary:?})");
    ensure!(median >= 0.10, "median gain {:.1} pp ({summary:?})", 100.0 * median);
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "{wins}/5 seeds improved, median +{:.1} pp, recall {} in {:.1}s",
        100.0 * median,
        summary.join(" "),
        elapsed.as_secs_f64()
    ))
}

// 5. pipeline composition with oracle stubs

struct Stub {
    classes: Vec<String>,
    calls: AtomicUsize,
    decide: fn(&str) -> usize,
}

impl Stub {
    fn new(classes: &[&str], decide: fn(&str) -> usize) -> Self {
        Stub {
            classes: classes.iter().map(|s| s.to_string()).collect(),
            calls: AtomicUsize::new(0),
            decide,
        }
    }
}

impl Classifier for Stub {
    fn classes(&self) -> &[String] {
        &self.classes
    }

    fn predict_proba(&self, text: &str) -> Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut p = vec![0.0; self.classes.len()];
        p[(self.decide)(text)] = 1.0;
        Ok(p)
    }
}

fn criterion_5() -> Outcome {
    let n = 10_000;
    let mut kinds: Vec<&str> = Vec::with_capacity(n);
    kinds.extend(std::iter::repeat_n("african", 1500));
    kinds.extend(std::iter::repeat_n("islam", 900));
    kinds.extend(std::iter::repeat_n("other", 600));
    kinds.extend(std::iter::repeat_n("normal", n - 3000));
    kinds.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    let posts: Vec<Post> = kinds
        .iter()
        .enumerate()
        .map(|(i, k)| Post {
            id: i.to_string(),
            text: match *k {
                "normal" => format!("this is a calm post number {i} about the weather"),
                t => format!("this is a HATEMARK post number {i} about the {t} group"),
            },
            label_mean: None,
            disputable: None,
            user_id: None,
        })
        .collect();

    let mut results = Vec::new();
    for workers in [1, 4, 8] {
        let detector = Stub::new(&["hate", "normal"], |t| usize::from(!t.contains("hatemark")));
        let target = Stub::new(&["African", "Islam", "Jewish", "LGBT", "Other"], |t| {
            if t.contains("african") {
                0
            } else if t.contains("islam") {
                1
            } else {
                4
            }
        });
        let pipeline = Pipeline::new(&detector, &target, None, NormalizerConfig::default()).map_err(|e| e.to_string())?;
        let config = RunConfig {
            workers,
            batch_size: 333,
            ..Default::default()
        };
        let stream = posts.iter().cloned().map(Ok::<Post, RowError>);
        let dist = run_corpus(&pipeline, stream, &config).map_err(|e| e.to_string())?;
        ensure!(dist.total == 10_000 && dist.hateful == 3000, "workers {workers}: {dist:?}");
        ensure!(dist.hate_rate() == 0.3, "hate rate {}", dist.hate_rate());
        let f = dist.fractions();
        ensure!(
            f[&TargetClass::African] == 0.5 && f[&TargetClass::Islam] == 0.3 && f[&TargetClass::Other] == 0.2,
            "fractions {f:?}"
        );
        ensure!(dist.is_consistent(), "counts do not add up");
        let stage2 = target.calls.load(Ordering::Relaxed);
        ensure!(stage2 == 3000, "target model called {stage2} times");
        ensure!(detector.calls.load(Ordering::Relaxed) == 10_000, "detector call count");
        let mut d = dist.clone();
        d.timings = Default::default();
        results.push(d);
    }
    ensure!(results.windows(2).all(|w| w[0] == w[1]), "results depend on worker count");
    Ok("10000 posts, rate 0.30, targets 0.5/0.3/0.2 exact, 3000 stage-2 calls, workers 1/4/8 agree".into())
}

// 6. topic recovery

const VOCABS: [[&str; 8]; 4] = [
    ["football", "goal", "striker", "referee", "stadium", "league", "keeper", "penalty"],
    ["pasta", "garlic", "oven", "recipe", "butter", "flour", "simmer", "basil"],
    ["compiler", "kernel", "server", "database", "router", "binary", "cache", "thread"],
    ["rain", "storm", "thunder", "cloud", "humid", "breeze", "forecast", "drizzle"],
];

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut texts = Vec::new();
    let mut planted = Vec::new();
    for (t, vocab) in VOCABS.iter().enumerate() {
        for _ in 0..200 {
            let len = rng.random_range(5..=9);
            let words: Vec<&str> = (0..len).map(|_| *vocab.choose(&mut rng).unwrap()).collect();
            texts.push(format!("the {} is here", words.join(" ")));
            planted.push(t);
        }
    }
    let grid: Vec<ClusterParams> = [(10, 5), (20, 5), (20, 10), (50, 10), (50, 25), (100, 25)]
        .iter()
        .map(|&(a, b)| ClusterParams::new(a, b))
        .collect();
    let model = fit_topics(&texts, TfidfProjectionEmbedder::new(64, 0), &grid).map_err(|e| e.to_string())?;
    let topics: BTreeSet<i64> = model.labels.iter().copied().filter(|&l| l != OUTLIER).collect();
    ensure!(topics.len() == 4, "{} topics: {:?}", topics.len(), model.names);

    let name_re = regex::Regex::new(r"^\d+_[^_\s]+_[^_\s]+_[^_\s]+_[^_\s]+$").unwrap();
    for &t in &topics {
        let name = &model.names[&t];
        ensure!(name_re.is_match(name), "bad topic name {name:?}");
        let members: Vec<usize> = (0..texts.len()).filter(|&i| model.labels[i] == t).collect();
        let mut votes = [0usize; 4];
        for &i in &members {
            votes[planted[i]] += 1;
        }
        let dominant = (0..4).max_by_key(|&v| votes[v]).unwrap();
        let hits = name.split('_').skip(1).filter(|w| VOCABS[dominant].contains(w)).count();
        ensure!(hits >= 2, "topic {name:?} has {hits} planted keywords");
    }

    // re-evaluate every grid point independently
    let embedded = model.embedder.embed(&texts);
    let mut counts = Vec::new();
    for p in &grid {
        let labels = cluster(&embedded, p).map_err(|e| e.to_string())?;
        counts.push(labels.iter().filter(|&&l| l == OUTLIER).count());
    }
    let best = *counts.iter().min().unwrap();
    let chosen = counts[grid.iter().position(|p| *p == model.params).unwrap()];
    ensure!(chosen == best, "tuned params have {chosen} outliers, grid minimum is {best}");
    Ok(format!(
        "4 topics ({}), tuned {:?} with {chosen} outliers",
        topics.iter().map(|t| model.names[t].as_str()).collect::<Vec<_>>().join(", "),
        (model.params.min_cluster_size, model.params.min_samples)
    ))
}

// 7. LIME keyword recovery

struct KeywordModel(&'static str, Vec<String>);

impl Classifier for KeywordModel {
    fn classes(&self) -> &[String] {
        &self.1
    }

    fn predict_proba(&self, text: &str) -> Result<Vec<f64>> {
        let p = if text.split_whitespace().any(|t| t == self.0) { 0.9 } else { 0.1 };
        Ok(vec![p, 1.0 - p])
    }
}

struct ConstantModel(Vec<String>);

impl Classifier for ConstantModel {
    fn classes(&self) -> &[String] {
        &self.0
    }

    fn predict_proba(&self, _: &str) -> Result<Vec<f64>> {
        Ok(vec![0.37, 0.63])
    }
}

fn criterion_7() -> Outcome {
    const FILLER: &[&str] = &["they", "have", "a", "monopoly", "on", "evil", "and", "all", "people", "know", "it", "now"];
    let classes = vec!["Jewish".to_string(), "Other".to_string()];
    let model = KeywordModel("jews", classes.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut exhaustive_hits, mut sampled_hits) = (0, 0);
    for case in 0..50 {
        let len = rng.random_range(2..=10);
        let mut tokens: Vec<&str> = (0..len - 1).map(|_| *FILLER.choose(&mut rng).unwrap()).collect();
        tokens.insert(rng.random_range(0..len), "jews");
        let text = tokens.join(" ");
        let top = |cfg: &ExplainConfig| -> std::result::Result<String, String> {
            let e = lime_explain(&model, &text, Some("Jewish"), cfg).map_err(|e| e.to_string())?;
            let (tok, w) = &e.token_weights[0];
            Ok(if *w > 0.0 { tok.clone() } else { String::new() })
        };
        let exhaustive = ExplainConfig {
            exhaustive: true,
            ..Default::default()
        };
        if top(&exhaustive)? == "jews" {
            exhaustive_hits += 1;
        }
        let sampled = ExplainConfig {
            n_samples: 1000,
            seed: case,
            ..Default::default()
        };
        if top(&sampled)? == "jews" {
            sampled_hits += 1;
        }
    }
    ensure!(exhaustive_hits == 50, "exhaustive mode ranked the keyword first in {exhaustive_hits}/50");
    ensure!(sampled_hits >= 48, "sampled mode ranked the keyword first in {sampled_hits}/50");

    let constant = ConstantModel(classes);
    let mut worst = 0.0f64;
    for text in ["jews have a monopoly on evil", "a b c d e f g h", "one"] {
        for exhaustive in [false, true] {
            let cfg = ExplainConfig {
                exhaustive,
                ..Default::default()
            };
            let e = lime_explain(&constant, text, Some("Jewish"), &cfg).map_err(|e| e.to_string())?;
            worst = e.weights.iter().fold(worst, |m, w| m.max(w.abs()));
        }
    }
    ensure!(worst <= 1e-6, "constant model weight {worst:e}");
    Ok(format!(
        "exhaustive {exhaustive_hits}/50, sampled {sampled_hits}/50, constant-model max |w| {worst:.1e}"
    ))
}

// 8. augmentation accounting

fn criterion_8() -> Outcome {
    let normalizer = NormalizerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data: Vec<Example<TargetClass>> = (0..60)
        .map(|i| {
            let label = TargetClass::MODEL_SPACE[i % 5];
            Example::new(format!("original post number {i} says something"), label, "synthetic")
        })
        .collect();
    let langs = ["es", "de", "fr"];
    let mut client = ScriptedClient::new();
    let mut expected: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, ex) in data.iter().enumerate() {
        for lang in langs {
            let pivot = format!("{lang} pivot {i}");
            // 0 = good paraphrase, 1 = unchanged, 2 = empty, 3 = too long,
            // 4 = missing forward, 5 = missing back, 6 = duplicated words
            let outcome = rng.random_range(0..7);
            if outcome != 4 {
                client.insert(ex.text.clone(), lang, pivot.clone());
            }
            let back = match outcome {
                0 => format!("Original POST {i} states something"),
                1 => ex.text.clone(),
                2 => String::new(),
                3 => "word ".repeat(60),
                6 => format!("original original post {i} says says something new"),
                _ => String::new(),
            };
            if outcome != 4 && outcome != 5 {
                client.insert(pivot, "en", back);
            }
            if outcome == 0 || outcome == 6 {
                *expected.entry(lang).or_default() += 1;
            }
        }
    }
    let config = AugmentConfig {
        languages: langs.iter().map(|s| s.to_string()).collect(),
        max_parallel: 4,
        ..Default::default()
    };
    let (out, report) = augment_dataset(&data, &client, &config, &normalizer).map_err(|e| e.to_string())?;
    let passes: usize = expected.values().sum();
    ensure!(out.len() == data.len() + passes, "{} examples, expected {}", out.len(), data.len() + passes);
    for lr in &report.languages {
        let want = expected.get(lr.language.as_str()).copied().unwrap_or(0);
        ensure!(lr.accepted == want, "{}: {} accepted, expected {want}", lr.language, lr.accepted);
        ensure!(lr.accepted + lr.rejected + lr.client_errors == data.len(), "{} accounting", lr.language);
    }
    ensure!(out[..data.len()] == data[..], "originals changed or reordered");
    for e in &out[data.len()..] {
        ensure!(e.augmented, "augmented flag missing");
        let again = normalize(&e.text, &normalizer);
        ensure!(again.as_str() == e.text, "augmented text not normalized: {:?}", e.text);
    }

    let (same, _) = augment_dataset(&data, &IdentityClient, &config, &normalizer).map_err(|e| e.to_string())?;
    ensure!(same == data, "identity client changed the dataset");
    Ok(format!("{} + {passes} examples exact; identity client is a no-op", data.len()))
}

// 9. loaders and splits

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("parler.jsonl");
    let mut lines = Vec::new();
    for i in 1..=40 {
        lines.push(match i {
            3 => "{not json".to_string(),
            17 => r#"{"id": "17", "label_mean": 2.0}"#.to_string(),
            29 => r#"{"id": "29", "text": "fine text", "label_mean": 9.5}"#.to_string(),
            _ => format!(r#"{{"id": "{i}", "text": "post {i}", "label_mean": 2.5}}"#),
        });
    }
    std::fs::write(&path, lines.join("\n")).map_err(|e| e.to_string())?;
    let loaded = load_parler(&path).map_err(|e| e.to_string())?;
    let rows: Vec<usize> = loaded.errors.iter().map(|e| e.row).collect();
    ensure!(rows == [3, 17, 29], "rejected rows {rows:?}");
    ensure!(loaded.items.len() == 37, "{} posts kept", loaded.items.len());

    let tox = load_toxigen(data_dir().join("toxigen_small.jsonl"), ToxigenVariant::Small).map_err(|e| e.to_string())?;
    let kept: Vec<usize> = tox
        .items
        .iter()
        .map(|e| e.text.split_whitespace().nth(3).unwrap().parse().unwrap())
        .collect();
    ensure!(kept == [1, 4, 6, 9, 11, 12, 14, 17, 19, 20], "ToxiGen kept rows {kept:?}");
    ensure!(tox.filtered == 10 && tox.errors.is_empty(), "ToxiGen bookkeeping");

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for case in 0..100 {
        let n = rng.random_range(1..300);
        let k = rng.random_range(1..=4);
        let data: Vec<Example<String>> = (0..n)
            .map(|i| {
                // skewed class sizes so some classes are tiny
                let c = (rng.random_range(0.0f64..1.0).powi(3) * k as f64) as usize;
                Example::new(format!("text {i}"), format!("c{c}"), "synthetic")
            })
            .collect();
        let fraction = [0.8, 0.9, 0.5, 0.75][case % 4];
        let cfg = SplitConfig {
            train_fraction: fraction,
            seed: case as u64,
            stratified: true,
        };
        let a = split(&data, &cfg).map_err(|e| e.to_string())?;
        let b = split(&data, &cfg).map_err(|e| e.to_string())?;
        ensure!(a.train == b.train && a.test == b.test, "case {case}: not deterministic");
        let mut all: Vec<&String> = a.train.iter().chain(&a.test).map(|e| &e.text).collect();
        all.sort();
        let mut orig: Vec<&String> = data.iter().map(|e| &e.text).collect();
        orig.sort();
        ensure!(all == orig, "case {case}: not a partition");
        let mut sizes: BTreeMap<&String, usize> = BTreeMap::new();
        for e in &data {
            *sizes.entry(&e.label).or_default() += 1;
        }
        for (label, &size) in &sizes {
            let in_train = a.train.iter().filter(|e| &e.label == *label).count();
            let want = if size < 2 { size } else { round_half_up(size as f64 * fraction) };
            ensure!(in_train == want, "case {case}: class {label} has {in_train}/{size} in train, expected {want}");
        }
    }
    Ok("rows 3/17/29 rejected by number; ToxiGen keeps 10/20; 100 splits deterministic and stratified".into())
}

// 10. serialization

fn random_model(seed: u64) -> TrainedClassifier {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fc = FeatureConfig {
        hash_dim: 1 << 10,
        hash_seed: seed,
        ..Default::default()
    };
    let mut m = TrainedClassifier::zeros(TargetClass::MODEL_SPACE.iter().map(|c| c.to_string()).collect(), fc);
    m.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0) * 1e-3f64.powi(rng.random_range(0..4)));
    m.bias.iter_mut().for_each(|w| *w = rng.random::<f64>() - 0.5);
    m
}

fn never_panics<T>(f: impl FnOnce() -> Result<T>) -> std::result::Result<bool, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => Ok(r.is_err()),
        Err(_) => Err("panicked on corrupt input".into()),
    }
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m = random_model(10);
    let path = dir.path().join("m.bin");
    model::save(&m, &path).map_err(|e| e.to_string())?;
    let back = model::load(&path).map_err(|e| e.to_string())?;
    ensure!(back.weights.iter().zip(&m.weights).all(|(a, b)| a.to_bits() == b.to_bits()), "weights differ");
    ensure!(back == m, "model differs after round trip");
    let bytes = model::to_bytes(&m);
    ensure!(model::to_bytes(&back) == bytes, "re-encoding differs");
    let probe = "some text to classify";
    ensure!(back.predict(probe).probs == m.predict(probe).probs, "predictions differ");

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut rejected = 0;
    for cut in (0..bytes.len()).step_by(97) {
        ensure!(never_panics(|| model::from_bytes(&bytes[..cut]))?, "truncation at {cut} accepted");
        rejected += 1;
    }
    for _ in 0..200 {
        let mut corrupt = bytes.clone();
        let i = rng.random_range(0..corrupt.len());
        corrupt[i] ^= 1 << rng.random_range(0..8);
        ensure!(never_panics(|| model::from_bytes(&corrupt))?, "bit flip at {i} accepted");
        rejected += 1;
    }
    let mut versioned = bytes.clone();
    versioned[8..12].copy_from_slice(&99u32.to_le_bytes());
    ensure!(
        matches!(model::from_bytes(&versioned), Err(Error::Version { found: 99, .. })),
        "version mismatch not reported"
    );

    let texts: Vec<String> = (0..120)
        .map(|i| format!("the {} and {}", VOCABS[i % 2][i % 8], VOCABS[i % 2][(i / 2) % 8]))
        .collect();
    let grid = [ClusterParams::new(10, 5)];
    let tm = fit_topics(&texts, TfidfProjectionEmbedder::new(16, 3), &grid).map_err(|e| e.to_string())?;
    let json = tm.to_json().map_err(|e| e.to_string())?;
    let tpath = dir.path().join("topics.json");
    tm.save(&tpath).map_err(|e| e.to_string())?;
    let back: TopicModel = TopicModel::load(&tpath).map_err(|e| e.to_string())?;
    ensure!(back == tm, "topic model differs after round trip");
    ensure!(back.to_json().map_err(|e| e.to_string())? == json, "topic JSON not stable");
    for cut in (0..json.len()).step_by(53) {
        ensure!(never_panics(|| TopicModel::<TfidfProjectionEmbedder>::from_json(&json[..cut]))?, "truncated topic JSON accepted");
        rejected += 1;
    }
    let missing = json.replacen("\"names\"", "\"nomes\"", 1);
    ensure!(never_panics(|| TopicModel::<TfidfProjectionEmbedder>::from_json(&missing))?, "missing field accepted");
    Ok(format!("bit-exact round trips; {rejected} corrupt inputs rejected without panics"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("normalizer goldens and idempotence", criterion_1),
        ("metrics oracle", criterion_2),
        ("gradient check", criterion_3),
        ("weighted loss raises minority recall", criterion_4),
        ("pipeline composition", criterion_5),
        ("topic recovery", criterion_6),
        ("LIME keyword test", criterion_7),
        ("augmentation accounting", criterion_8),
        ("data plumbing", criterion_9),
        ("serialization", criterion_10),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str()) || *o == (i + 1).to_string()) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.2}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
