//! Subcommand implementations.

use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use hatetarget::augment::{
    augment_dataset, AugmentConfig, HttpTranslationClient, ScriptedClient, TranslationClient,
};
use hatetarget::corpus::{
    binarize_with, filter_english, load_parler, read_jsonl, split, stream_posts, write_jsonl,
    CorpusLoader, Example, Loaded, SplitConfig, ThresholdRule, ToxigenVariant,
};
use hatetarget::eval::{evaluate, render_detector_table, render_target_table, EvalOptions};
use hatetarget::explain::{lime_explain, render_html, ExplainConfig};
use hatetarget::model::{self, remote::HttpClassifier, Classifier, FeatureConfig, Hyperparams};
use hatetarget::normalize::{normalize, NormalizerConfig};
use hatetarget::pipeline::{report, run_corpus, Pipeline, ReportFormat, RunConfig, TargetDistribution};
use hatetarget::topics::{concat_topic, fit_topics, ClusterParams, TfidfProjectionEmbedder, TopicConcat, TopicModel};
use log::info;
use serde_json::json;

use crate::*;

type Examples = Vec<Example<String>>;

pub fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Normalize(a) => normalize_cmd(a),
        Command::Augment(a) => augment(a),
        Command::Topics(TopicsCommand::Fit(a)) => topics_fit(a),
        Command::Topics(TopicsCommand::Assign(a)) => topics_assign(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Run(a) => run(a),
        Command::Explain(a) => explain(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn write_output(path: Option<&Path>, content: &str) -> CliResult {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|e| CliError::data(format!("{}: {e}", p.display()))),
        None => {
            print!("{content}");
            if !content.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn load_classifier(args: &ModelArgs) -> CliResult<Box<dyn Classifier>> {
    if args.model.starts_with("http://") || args.model.starts_with("https://") {
        if args.classes.len() < 2 {
            return Err(CliError::usage("an HTTP model needs --classes with at least two names"));
        }
        return Ok(Box::new(HttpClassifier::new(
            args.model.clone(),
            args.classes.clone(),
            Duration::from_secs(30),
        )));
    }
    Ok(Box::new(load_model(Path::new(&args.model))?))
}

/// Any failure to load a model counts as a model error.
fn load_model(path: &Path) -> CliResult<model::TrainedClassifier> {
    model::load(path).map_err(|e| CliError::model(e.to_string()))
}

fn load_topics(path: &Path) -> CliResult<TopicModel> {
    TopicModel::load(path).map_err(|e| CliError::model(e.to_string()))
}

fn translator(args: &TranslatorArgs) -> CliResult<Box<dyn TranslationClient>> {
    match (&args.mock, &args.endpoint) {
        (Some(tsv), _) => Ok(Box::new(ScriptedClient::load(tsv)?)),
        (None, Some(url)) => Ok(Box::new(HttpTranslationClient::new(
            url.clone(),
            Duration::from_secs(args.timeout_secs),
        ))),
        (None, None) => Err(CliError::usage("back-translation needs --mock or --endpoint")),
    }
}

fn augment_config(args: &TranslatorArgs) -> AugmentConfig {
    AugmentConfig {
        languages: args.langs.clone(),
        max_parallel: args.max_parallel,
        ..Default::default()
    }
}

fn summary<T>(loaded: &Loaded<T>, kept: usize) -> serde_json::Value {
    json!({
        "rows": loaded.rows,
        "kept": kept,
        "errors": loaded.errors.len(),
        "dropped": loaded.dropped,
        "filtered": loaded.filtered,
        "excluded": loaded.excluded,
    })
}

fn ingest(a: IngestArgs) -> CliResult {
    let normalizer = NormalizerConfig::default();
    let loader = CorpusLoader {
        normalizer: normalizer.clone(),
        english_only: !a.no_english_filter,
        hate_only: a.hate_only,
    };
    let report = match a.dataset {
        Dataset::Parler => {
            let loaded = load_parler(&a.input)?;
            let (posts, excluded) = if a.no_english_filter {
                (loaded.items.clone(), 0)
            } else {
                filter_english(loaded.items.clone(), &normalizer)
            };
            let rule = if a.strict { ThresholdRule::Strict } else { ThresholdRule::Inclusive };
            let mut unlabeled = 0;
            let mut out = Vec::with_capacity(posts.len());
            for p in &posts {
                match binarize_with(p, a.threshold, rule, &normalizer) {
                    Ok(e) => out.push(e),
                    Err(_) => unlabeled += 1,
                }
            }
            if unlabeled > 0 {
                log::warn!("{unlabeled} posts without a label mean skipped");
            }
            write_jsonl(&a.out, &out)?;
            let mut s = summary(&loaded, out.len());
            s["excluded"] = json!(excluded);
            s["unlabeled"] = json!(unlabeled);
            s
        }
        other => {
            let loaded = match other {
                Dataset::Hatexplain => loader.load_hatexplain(&a.input)?,
                Dataset::Dialoconan => loader.load_dialoconan(&a.input)?,
                Dataset::ToxigenSmall => loader.load_toxigen(&a.input, ToxigenVariant::Small)?,
                Dataset::ToxigenLarge => loader.load_toxigen(&a.input, ToxigenVariant::Large)?,
                Dataset::Tap => loader.load_tap(&a.input, !a.keep_politician)?,
                Dataset::Parler => unreachable!(),
            };
            write_jsonl(&a.out, &loaded.items)?;
            summary(&loaded, loaded.items.len())
        }
    };
    println!("{report}");
    Ok(())
}

fn normalize_cmd(a: NormalizeArgs) -> CliResult {
    let config = NormalizerConfig::default();
    if let Some(text) = &a.text {
        return write_output(a.out.as_deref(), normalize(text, &config).as_str());
    }
    let reader: Box<dyn BufRead> = match &a.input {
        Some(p) => Box::new(std::io::BufReader::new(
            std::fs::File::open(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdin().lock()),
    };
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(
            std::fs::File::create(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    let mut w = BufWriter::new(sink);
    for line in reader.lines() {
        let line = line.map_err(|e| CliError::data(e.to_string()))?;
        writeln!(w, "{}", normalize(&line, &config).as_str()).map_err(|e| CliError::data(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::data(e.to_string()))
}

fn augment(a: AugmentArgs) -> CliResult {
    let data: Examples = read_jsonl(&a.input)?;
    let client = translator(&a.translator)?;
    let (out, rep) = augment_dataset(&data, client.as_ref(), &augment_config(&a.translator), &NormalizerConfig::default())?;
    write_jsonl(&a.out, &out)?;
    println!("{}", serde_json::to_string(&rep).map_err(hatetarget::Error::from)?);
    Ok(())
}

fn parse_grid(specs: &[String]) -> CliResult<Vec<ClusterParams>> {
    specs
        .iter()
        .map(|s| {
            let bad = || CliError::usage(format!("bad grid entry {s:?}; expected SIZE:SAMPLES"));
            let (a, b) = s.split_once(':').ok_or_else(bad)?;
            let p = ClusterParams::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            p.validate()?;
            Ok(p)
        })
        .collect()
}

fn read_texts(path: &Path, plain: bool) -> CliResult<Vec<String>> {
    if plain {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        Ok(text.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
    } else {
        let data: Examples = read_jsonl(path)?;
        Ok(data.into_iter().map(|e| e.text).collect())
    }
}

fn topics_fit(a: TopicsFitArgs) -> CliResult {
    let texts = read_texts(&a.input, a.plain)?;
    let grid = if a.grid.is_empty() { ClusterParams::default_grid(a.min_samples_floor) } else { parse_grid(&a.grid)? };
    let model = fit_topics(&texts, TfidfProjectionEmbedder::new(a.dim, a.seed), &grid)?;
    model.save(&a.out)?;
    println!(
        "{}",
        json!({
            "texts": texts.len(),
            "topics": model.topic_count(),
            "outliers": model.outlier_count(),
            "params": model.params,
            "names": model.names,
        })
    );
    Ok(())
}

fn topics_assign(a: TopicsAssignArgs) -> CliResult {
    let model = load_topics(&a.model)?;
    let data: Examples = read_jsonl(&a.input)?;
    if a.concat {
        let out = data
            .into_iter()
            .map(|mut e| {
                e.text = model.with_topic(&e.text)?;
                Ok(e)
            })
            .collect::<hatetarget::Result<Examples>>()?;
        write_jsonl(&a.out, &out)?;
    } else {
        let rows: Vec<serde_json::Value> = data
            .iter()
            .map(|e| {
                let topic = model.assign(&e.text);
                json!({"text": e.text, "topic": topic, "name": model.names.get(&topic)})
            })
            .collect();
        write_jsonl(&a.out, &rows)?;
    }
    Ok(())
}

fn training_data(a: &TrainArgs) -> CliResult<Examples> {
    let normalizer = NormalizerConfig::default();
    let mut data = Examples::new();
    for path in &a.data {
        match a.task {
            Task::Detect => {
                let loaded = load_parler(path)?;
                let posts = if a.no_english_filter {
                    loaded.items
                } else {
                    filter_english(loaded.items, &normalizer).0
                };
                for p in &posts {
                    let e = binarize_with(p, a.threshold, ThresholdRule::Inclusive, &normalizer)?;
                    data.push(Example::new(e.text, e.label.to_string(), e.origin));
                }
            }
            Task::Target => data.extend(read_jsonl::<Example<String>>(path)?),
        }
    }
    if data.is_empty() {
        return Err(CliError::data("no training examples"));
    }
    Ok(data)
}

fn with_topics(data: Examples, topics: &dyn TopicConcat) -> hatetarget::Result<Examples> {
    data.into_iter()
        .map(|mut e| {
            e.text = topics.with_topic(&e.text)?;
            Ok(e)
        })
        .collect()
}

fn train(a: TrainArgs) -> CliResult {
    if !(0.0..1.0).contains(&a.val_fraction) {
        return Err(CliError::usage("--val-fraction must lie in [0, 1)"));
    }
    let data = training_data(&a)?;
    let parts = split(&data, &SplitConfig { train_fraction: a.train_fraction, seed: a.seed, stratified: true })?;
    let test = parts.test;
    let (mut fit, mut val) = if a.val_fraction > 0.0 {
        let inner = split(
            &parts.train,
            &SplitConfig { train_fraction: 1.0 - a.val_fraction, seed: a.seed.wrapping_add(1), stratified: true },
        )?;
        (inner.train, inner.test)
    } else {
        (parts.train, Vec::new())
    };
    info!("{} train / {} validation / {} test", fit.len(), val.len(), test.len());
    if let Some(p) = &a.test_out {
        write_jsonl(p, &test)?;
    }

    let originals = fit.len();
    if a.backtranslate {
        let client = translator(&a.translator)?;
        let (augmented, rep) =
            augment_dataset(&fit, client.as_ref(), &augment_config(&a.translator), &NormalizerConfig::default())?;
        info!("back-translation added {} examples ({} failures)", rep.added(), rep.failures());
        fit = augmented;
    }

    let topic_model = if a.topic {
        let tm = match &a.topics {
            Some(p) => load_topics(p)?,
            None => {
                let texts: Vec<String> = fit[..originals].iter().map(|e| e.text.clone()).collect();
                // min_samples never drops below the smallest class
                let mut sizes: std::collections::BTreeMap<&str, usize> = Default::default();
                for e in &fit[..originals] {
                    *sizes.entry(e.label.as_str()).or_default() += 1;
                }
                let floor = sizes.values().copied().min().unwrap_or(1);
                let grid = ClusterParams::default_grid(floor);
                let tm = fit_topics(&texts, TfidfProjectionEmbedder::default(), &grid)?;
                let out = a.topics_out.clone().unwrap_or_else(|| {
                    let mut p = a.out.clone().into_os_string();
                    p.push(".topics.json");
                    PathBuf::from(p)
                });
                tm.save(&out)?;
                info!("topic model with {} topics written to {}", tm.topic_count(), out.display());
                tm
            }
        };
        let fitted_here = a.topics.is_none();
        let mut tagged = Vec::with_capacity(fit.len());
        for (i, mut e) in fit.into_iter().enumerate() {
            e.text = if fitted_here && i < originals {
                concat_topic(&e.text, &tm, tm.labels[i])?
            } else {
                tm.with_topic(&e.text)?
            };
            tagged.push(e);
        }
        fit = tagged;
        val = with_topics(val, &tm)?;
        Some(tm)
    } else {
        None
    };

    let hp = Hyperparams {
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        learning_rate: a.lr,
        early_stop_patience: a.patience,
        weighted_loss: a.weighted,
        seed: a.seed,
        ..Default::default()
    };
    let fc = FeatureConfig { hash_dim: a.hash_dim, ..Default::default() };
    let trained = model::train(&fit, &val, &hp, &fc)?;
    model::save(&trained, &a.out)?;
    info!("model written to {}", a.out.display());

    if test.is_empty() {
        return Ok(());
    }
    let options = EvalOptions {
        positive: (a.task == Task::Detect).then(|| "hate".to_string()),
        topic_model: topic_model.as_ref().map(|t| t as &dyn TopicConcat),
        dataset: "held-out".into(),
        model: a.out.display().to_string(),
        back_translation: a.backtranslate,
    };
    let rep = evaluate(&trained, &test, &options)?;
    println!("{}", serde_json::to_string(&rep).map_err(hatetarget::Error::from)?);
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> CliResult {
    let model = load_classifier(&a.model)?;
    let topics = a.topics.as_deref().map(load_topics).transpose()?;
    let data: Examples = read_jsonl(&a.data)?;
    let options = EvalOptions {
        positive: a.positive.clone(),
        topic_model: topics.as_ref().map(|t| t as &dyn TopicConcat),
        dataset: a.data.display().to_string(),
        model: a.name.clone().unwrap_or_else(|| a.model.model.clone()),
        back_translation: a.backtranslated,
    };
    let rep = evaluate(model.as_ref(), &data, &options)?;
    let text = match a.format {
        EvalFormat::Json => serde_json::to_string_pretty(&rep).map_err(hatetarget::Error::from)?,
        EvalFormat::Table if a.positive.is_some() => render_detector_table(std::slice::from_ref(&rep)),
        EvalFormat::Table => render_target_table(std::slice::from_ref(&rep)),
    };
    write_output(a.out.as_deref(), &text)
}

fn run(a: RunArgs) -> CliResult {
    let format: ReportFormat = a.format.parse()?;
    let detector = load_model(&a.detector)?;
    let target = load_model(&a.target)?;
    let topics = a.topics.as_deref().map(load_topics).transpose()?;
    let pipeline = Pipeline::new(
        &detector,
        &target,
        topics.as_ref().map(|t| t as &dyn TopicConcat),
        NormalizerConfig::default(),
    )
    .map_err(|e| CliError::model(e.to_string()))?
    .with_tag(a.tag.clone().unwrap_or_else(|| a.detector.display().to_string()));
    let config = RunConfig {
        batch_size: a.batch_size,
        workers: a.workers,
        english_only: !a.no_english_filter,
        ..Default::default()
    };
    let dist = run_corpus(&pipeline, stream_posts(&a.corpus)?, &config)?;
    eprintln!(
        "{} posts: {} hateful, {} normal, {} excluded, {} failed",
        dist.total, dist.hateful, dist.normal, dist.excluded, dist.failed
    );
    write_output(Some(&a.out), &report(&dist, format)?)
}

fn explain(a: ExplainArgs) -> CliResult {
    let model = load_classifier(&a.model)?;
    let text = normalize(&a.text, &NormalizerConfig::default()).into_string();
    let config = ExplainConfig {
        n_samples: a.samples,
        n_features: a.features,
        kernel_width: a.kernel_width,
        seed: a.seed,
        exhaustive: a.exhaustive,
        ..Default::default()
    };
    let e = lime_explain(model.as_ref(), &text, a.class.as_deref(), &config)?;
    if let Some(p) = &a.html {
        write_output(Some(p), &render_html(&e))?;
    }
    write_output(a.out.as_deref(), &serde_json::to_string_pretty(&e).map_err(hatetarget::Error::from)?)
}

fn report_cmd(a: ReportArgs) -> CliResult {
    let format: ReportFormat = a.format.parse()?;
    let text = std::fs::read_to_string(&a.input).map_err(|e| CliError::data(format!("{}: {e}", a.input.display())))?;
    let dist: TargetDistribution =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", a.input.display())))?;
    if !dist.is_consistent() {
        return Err(CliError::data(format!("{}: counts do not add up", a.input.display())));
    }
    write_output(a.out.as_deref(), &report(&dist, format)?)
}
