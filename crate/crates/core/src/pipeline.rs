//! End-to-end inference: normalize, detect hate, optionally attach a topic,
//! classify the target, and aggregate a target distribution.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{HateLabel, Post, RowError, TargetClass};
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::normalize::{is_english, normalize, NormalizerConfig};
use crate::topics::TopicConcat;

/// Per-post result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classified {
    pub text: String,
    pub hate_probability: f64,
    pub hateful: bool,
    /// Set only for hateful posts.
    pub target: Option<TargetClass>,
}

/// Classes outside the model space (and unknown names) fold into `Other`.
pub fn to_target_class(label: &str) -> TargetClass {
    match TargetClass::from_str(label) {
        Ok(c) if c.in_model_space() => c,
        _ => TargetClass::Other,
    }
}

/// Time spent per stage, summed over worker threads.
#[derive(Debug, Default)]
struct StageClock {
    normalize: AtomicU64,
    detect: AtomicU64,
    topic: AtomicU64,
    target: AtomicU64,
}

fn timed<T>(slot: Option<&AtomicU64>, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    if let Some(slot) = slot {
        slot.fetch_add(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub normalize_secs: f64,
    pub detect_secs: f64,
    pub topic_secs: f64,
    pub target_secs: f64,
}

impl From<&StageClock> for StageTimings {
    fn from(c: &StageClock) -> Self {
        let secs = |a: &AtomicU64| Duration::from_nanos(a.load(Ordering::Relaxed)).as_secs_f64();
        StageTimings {
            normalize_secs: secs(&c.normalize),
            detect_secs: secs(&c.detect),
            topic_secs: secs(&c.topic),
            target_secs: secs(&c.target),
        }
    }
}

/// Models used by the pipeline.
pub struct Pipeline<'a> {
    pub detector: &'a dyn Classifier,
    pub target_model: &'a dyn Classifier,
    pub topic_model: Option<&'a dyn TopicConcat>,
    pub normalizer: NormalizerConfig,
    /// Recorded in every distribution, e.g. the detector's threshold setting.
    pub detector_tag: String,
    hate_index: usize,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        detector: &'a dyn Classifier,
        target_model: &'a dyn Classifier,
        topic_model: Option<&'a dyn TopicConcat>,
        normalizer: NormalizerConfig,
    ) -> Result<Self> {
        let hate = HateLabel::Hate.as_str();
        let hate_index = detector.class_index(hate).ok_or_else(|| Error::UnknownLabel {
            label: hate.into(),
            known: detector.classes().join(", "),
        })?;
        Ok(Pipeline {
            detector,
            target_model,
            topic_model,
            normalizer,
            detector_tag: String::new(),
            hate_index,
        })
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.detector_tag = tag.into();
        self
    }

    /// Classifies one raw post. The detector runs once; the target model
    /// runs once and only for hateful posts.
    pub fn classify_post(&self, text: &str) -> Result<Classified> {
        self.classify_timed(text, None)
    }

    fn classify_timed(&self, text: &str, clock: Option<&StageClock>) -> Result<Classified> {
        let text = timed(clock.map(|c| &c.normalize), || normalize(text, &self.normalizer)).into_string();
        let probs = timed(clock.map(|c| &c.detect), || self.detector.predict_proba(&text))?;
        let hateful = crate::model::argmax(&probs) == self.hate_index;
        let target = if hateful {
            let input = match self.topic_model {
                Some(tm) => timed(clock.map(|c| &c.topic), || tm.with_topic(&text))?,
                None => text.clone(),
            };
            let pred = timed(clock.map(|c| &c.target), || self.target_model.predict(&input))?;
            Some(to_target_class(&pred.label))
        } else {
            None
        };
        Ok(Classified {
            text,
            hate_probability: probs[self.hate_index],
            hateful,
            target,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub batch_size: usize,
    pub workers: usize,
    pub english_only: bool,
    /// Log progress every this many posts; 0 disables.
    pub progress_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            batch_size: 512,
            workers: 4,
            english_only: true,
            progress_every: 100_000,
        }
    }
}

/// Aggregate counts over a corpus run.
///
/// Every post read is counted exactly once:
/// `total = normal + hateful + excluded + failed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution {
    /// Identifies the detector that produced the counts.
    #[serde(default)]
    pub detector: String,
    pub total: u64,
    pub normal: u64,
    pub hateful: u64,
    /// Non-English posts skipped before classification.
    pub excluded: u64,
    /// Rows that failed to parse or classify.
    pub failed: u64,
    pub counts: BTreeMap<TargetClass, u64>,
    pub timings: StageTimings,
}

impl Default for TargetDistribution {
    fn default() -> Self {
        TargetDistribution {
            detector: String::new(),
            total: 0,
            normal: 0,
            hateful: 0,
            excluded: 0,
            failed: 0,
            counts: TargetClass::MODEL_SPACE.iter().map(|&c| (c, 0)).collect(),
            timings: StageTimings::default(),
        }
    }
}

impl TargetDistribution {
    /// Share of hateful posts per target; all zero when nothing was hateful.
    pub fn fractions(&self) -> BTreeMap<TargetClass, f64> {
        self.counts
            .iter()
            .map(|(&c, &n)| {
                let f = if self.hateful == 0 {
                    0.0
                } else {
                    n as f64 / self.hateful as f64
                };
                (c, f)
            })
            .collect()
    }

    /// Hateful share of all posts read.
    pub fn hate_rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hateful as f64 / self.total as f64
        }
    }

    /// Targets by decreasing count, ties in class order.
    pub fn ranked(&self) -> Vec<(TargetClass, u64)> {
        let mut v: Vec<(TargetClass, u64)> = self.counts.iter().map(|(&c, &n)| (c, n)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    pub fn is_consistent(&self) -> bool {
        self.total == self.normal + self.hateful + self.excluded + self.failed
            && self.counts.values().sum::<u64>() == self.hateful
    }
}

#[derive(Default)]
struct Counters {
    total: AtomicU64,
    normal: AtomicU64,
    hateful: AtomicU64,
    excluded: AtomicU64,
    failed: AtomicU64,
    targets: [AtomicU64; 5],
}

fn target_slot(c: TargetClass) -> usize {
    TargetClass::MODEL_SPACE.iter().position(|&m| m == c).unwrap_or(4)
}

/// Streams `posts` through the pipeline in batches on a pool of
/// `config.workers` threads.
pub fn run_corpus<I>(pipeline: &Pipeline, posts: I, config: &RunConfig) -> Result<TargetDistribution>
where
    I: IntoIterator<Item = std::result::Result<Post, RowError>>,
{
    if config.workers == 0 || config.batch_size == 0 {
        return Err(Error::Config("workers and batch size must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let counters = Counters::default();
    let clock = StageClock::default();
    let started = Instant::now();
    let mut next_progress = config.progress_every as u64;

    let mut posts = posts.into_iter().peekable();
    while posts.peek().is_some() {
        let batch: Vec<_> = posts.by_ref().take(config.batch_size).collect();
        pool.install(|| {
            batch.par_iter().for_each(|item| {
                counters.total.fetch_add(1, Ordering::Relaxed);
                let post = match item {
                    Ok(p) => p,
                    Err(e) => {
                        warn!("skipping row: {e}");
                        counters.failed.fetch_add(1, Ordering::Relaxed);
                        return;
                    }
                };
                if config.english_only && !is_english(&post.text, &pipeline.normalizer) {
                    counters.excluded.fetch_add(1, Ordering::Relaxed);
                    return;
                }
                match pipeline.classify_timed(&post.text, Some(&clock)) {
                    Ok(Classified {
                        target: Some(t), ..
                    }) => {
                        counters.hateful.fetch_add(1, Ordering::Relaxed);
                        counters.targets[target_slot(t)].fetch_add(1, Ordering::Relaxed);
                    }
                    Ok(_) => {
                        counters.normal.fetch_add(1, Ordering::Relaxed);
                    }
                    Err(e) => {
                        warn!("post {}: {e}", post.id);
                        counters.failed.fetch_add(1, Ordering::Relaxed);
                    }
                }
            })
        });
        let done = counters.total.load(Ordering::Relaxed);
        if config.progress_every > 0 && done >= next_progress {
            let rate = done as f64 / started.elapsed().as_secs_f64().max(1e-9);
            info!("{done} posts processed ({rate:.0}/s)");
            next_progress = done + config.progress_every as u64;
        }
    }

    let load = |a: &AtomicU64| a.load(Ordering::Relaxed);
    let dist = TargetDistribution {
        detector: pipeline.detector_tag.clone(),
        total: load(&counters.total),
        normal: load(&counters.normal),
        hateful: load(&counters.hateful),
        excluded: load(&counters.excluded),
        failed: load(&counters.failed),
        counts: TargetClass::MODEL_SPACE
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, load(&counters.targets[i])))
            .collect(),
        timings: StageTimings::from(&clock),
    };
    debug_assert!(dist.is_consistent());
    info!(
        "{} posts: {} hateful, {} normal, {} excluded, {} failed",
        dist.total, dist.hateful, dist.normal, dist.excluded, dist.failed
    );
    Ok(dist)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "text" | "txt" => Ok(ReportFormat::Text),
            _ => Err(Error::Config(format!("unknown report format {s:?}"))),
        }
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    #[serde(flatten)]
    dist: &'a TargetDistribution,
    hate_rate: f64,
    fractions: BTreeMap<TargetClass, f64>,
}

const BAR_WIDTH: usize = 40;

pub fn report(dist: &TargetDistribution, format: ReportFormat) -> Result<String> {
    let fractions = dist.fractions();
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(&JsonReport {
            dist,
            hate_rate: dist.hate_rate(),
            fractions: fractions.clone(),
        })?),
        ReportFormat::Csv => {
            let mut out = String::from("target,count,fraction\n");
            for (c, n) in dist.ranked() {
                writeln!(out, "{c},{n},{:.6}", fractions[&c]).unwrap();
            }
            Ok(out)
        }
        ReportFormat::Text => {
            let mut out = String::new();
            if !dist.detector.is_empty() {
                writeln!(out, "detector: {}", dist.detector).unwrap();
            }
            writeln!(
                out,
                "posts: {} (hateful {}, normal {}, excluded {}, failed {}); hate rate {:.1}%",
                dist.total,
                dist.hateful,
                dist.normal,
                dist.excluded,
                dist.failed,
                100.0 * dist.hate_rate()
            )
            .unwrap();
            if dist.hateful == 0 {
                out.push_str("no hateful posts\n");
                return Ok(out);
            }
            for (c, n) in dist.ranked() {
                let f = fractions[&c];
                let bar = "#".repeat((f * BAR_WIDTH as f64).round() as usize);
                writeln!(out, "{:<8} {:<width$} {:>5.1}% ({n})", c.as_str(), bar, 100.0 * f, width = BAR_WIDTH).unwrap();
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<String>, fn(&str) -> usize);

    impl Classifier for Fixed {
        fn classes(&self) -> &[String] {
            &self.0
        }

        fn predict_proba(&self, text: &str) -> Result<Vec<f64>> {
            let mut p = vec![0.0; self.0.len()];
            p[(self.1)(text)] = 1.0;
            Ok(p)
        }
    }

    fn detector() -> Fixed {
        Fixed(vec!["hate".into(), "normal".into()], |t| usize::from(!t.contains("hate")))
    }

    fn targets() -> Fixed {
        Fixed(
            vec!["African".into(), "Islam".into(), "Jewish".into(), "LGBT".into(), "Other".into(), "Politician".into()],
            |t| if t.contains("islam") { 1 } else if t.contains("mayor") { 5 } else { 4 },
        )
    }

    fn post(id: usize, text: &str) -> std::result::Result<Post, RowError> {
        Ok(Post {
            id: id.to_string(),
            text: text.into(),
            label_mean: None,
            disputable: None,
            user_id: None,
        })
    }

    #[test]
    fn single_post() {
        let (d, t) = (detector(), targets());
        let p = Pipeline::new(&d, &t, None, NormalizerConfig::default()).unwrap();
        let c = p.classify_post("I HATE islam").unwrap();
        assert!(c.hateful);
        assert_eq!(c.target, Some(TargetClass::Islam));
        assert_eq!(c.text, "i hate islam");
        assert_eq!(p.classify_post("hate the mayor").unwrap().target, Some(TargetClass::Other));
        assert_eq!(p.classify_post("nice day").unwrap().target, None);
    }

    #[test]
    fn detector_without_hate_class() {
        let d = Fixed(vec!["a".into(), "b".into()], |_| 0);
        let t = targets();
        assert!(Pipeline::new(&d, &t, None, NormalizerConfig::default()).is_err());
    }

    #[test]
    fn counts_add_up() {
        let (d, t) = (detector(), targets());
        let p = Pipeline::new(&d, &t, None, NormalizerConfig::default()).unwrap();
        let posts = vec![
            post(1, "i hate islam and all of it"),
            post(2, "it is a nice day for the walk"),
            post(3, "der Hund und die Katze sind hier heute"),
            Err(RowError {
                row: 4,
                message: "bad".into(),
            }),
            post(5, "we hate the mayor so much"),
        ];
        let config = RunConfig {
            batch_size: 2,
            workers: 2,
            ..Default::default()
        };
        let dist = run_corpus(&p, posts, &config).unwrap();
        assert_eq!((dist.total, dist.hateful, dist.normal, dist.excluded, dist.failed), (5, 2, 1, 1, 1));
        assert!(dist.is_consistent());
        assert_eq!(dist.counts[&TargetClass::Islam], 1);
        assert_eq!(dist.counts[&TargetClass::Other], 1);
        assert_eq!(dist.fractions()[&TargetClass::Islam], 0.5);
    }

    #[test]
    fn empty_report() {
        let dist = TargetDistribution::default();
        assert!(report(&dist, ReportFormat::Text).unwrap().contains("no hateful posts"));
        let csv = report(&dist, ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 6);
        let json: serde_json::Value = serde_json::from_str(&report(&dist, ReportFormat::Json).unwrap()).unwrap();
        assert_eq!(json["fractions"]["LGBT"], 0.0);
        assert_eq!(json["hate_rate"], 0.0);
    }

    #[test]
    fn json_round_trip() {
        let mut dist = TargetDistribution {
            detector: "weighted-t3".into(),
            ..Default::default()
        };
        dist.counts.insert(TargetClass::Islam, 3);
        dist.hateful = 3;
        dist.total = 10;
        dist.normal = 7;
        dist.timings.detect_secs = 0.1 + 0.2;
        let json = report(&dist, ReportFormat::Json).unwrap();
        let back: TargetDistribution = serde_json::from_str(&json).unwrap();
        assert_eq!(back, dist);
    }

    #[test]
    fn csv_sorted_by_count() {
        let mut dist = TargetDistribution::default();
        dist.counts.insert(TargetClass::Jewish, 5);
        dist.counts.insert(TargetClass::African, 2);
        dist.hateful = 7;
        dist.total = 7;
        let csv = report(&dist, ReportFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[1].starts_with("Jewish,5,"));
        assert!(lines[2].starts_with("African,2,"));
    }
}
