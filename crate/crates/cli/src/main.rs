//! `hatetarget` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 model error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use hatetarget::ErrorKind;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn model(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

impl From<hatetarget::Error> for CliError {
    fn from(e: hatetarget::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Model => 3,
        };
        CliError { code, message: e.to_string() }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "hatetarget", version, about = "Hate speech detection and target classification")]
pub struct Cli {
    /// Key-value configuration file; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Log progress and per-file warnings.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a raw corpus and write normalized, labeled examples as JSON lines.
    Ingest(IngestArgs),
    /// Normalize texts, one per line.
    Normalize(NormalizeArgs),
    /// Add back-translated copies of a training set.
    Augment(AugmentArgs),
    /// Fit or apply a topic model.
    #[command(subcommand)]
    Topics(TopicsCommand),
    /// Train a detector or a target classifier.
    Train(TrainArgs),
    /// Score a model on a labeled dataset.
    Evaluate(EvaluateArgs),
    /// Run detector and target classifier over a post corpus.
    Run(RunArgs),
    /// Explain a single prediction with token attributions.
    Explain(ExplainArgs),
    /// Render a saved target distribution.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Dataset {
    Parler,
    Hatexplain,
    Dialoconan,
    ToxigenSmall,
    ToxigenLarge,
    Tap,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub dataset: Dataset,
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Parler: label mean at or above which a post is hateful.
    #[arg(long, default_value_t = 3.0)]
    pub threshold: f64,
    /// Parler: require the label mean to exceed the threshold.
    #[arg(long)]
    pub strict: bool,
    /// Keep posts failing the English check.
    #[arg(long)]
    pub no_english_filter: bool,
    /// HateXplain: keep only records voted hate speech.
    #[arg(long)]
    pub hate_only: bool,
    /// TAP: keep Politician as its own class.
    #[arg(long)]
    pub keep_politician: bool,
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    /// Normalize this text instead of reading lines.
    #[arg(long, conflicts_with = "input")]
    pub text: Option<String>,
    /// Input file; standard input when absent.
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

/// Where translations come from.
#[derive(Debug, Args, Clone)]
pub struct TranslatorArgs {
    /// Comma-separated pivot languages.
    #[arg(long, value_delimiter = ',', default_value = "es,de,fr")]
    pub langs: Vec<String>,
    /// TSV file of `input<TAB>lang<TAB>output` translations.
    #[arg(long, value_name = "FILE", conflicts_with = "endpoint")]
    pub mock: Option<PathBuf>,
    /// Translation service URL.
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    #[arg(long, default_value_t = 8)]
    pub max_parallel: usize,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub translator: TranslatorArgs,
}

#[derive(Debug, Subcommand)]
pub enum TopicsCommand {
    /// Cluster texts and name the clusters.
    Fit(TopicsFitArgs),
    /// Assign texts to the topics of a fitted model.
    Assign(TopicsAssignArgs),
}

#[derive(Debug, Args)]
pub struct TopicsFitArgs {
    /// Examples (JSON lines) or plain text lines with `--plain`.
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Candidate `min_cluster_size:min_samples` pairs, e.g. `5:3,10:5`.
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<String>,
    /// Lower bound on `min_samples` in the default grid.
    #[arg(long, default_value_t = 1)]
    pub min_samples_floor: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub plain: bool,
}

#[derive(Debug, Args)]
pub struct TopicsAssignArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Write the examples back with topic words appended instead of labels.
    #[arg(long)]
    pub concat: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Detect,
    Target,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// Detect: raw Parler posts. Target: ingested examples; may repeat.
    #[arg(long, value_name = "FILE", required = true)]
    pub data: Vec<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Detect: label mean at or above which a post is hateful.
    #[arg(long, default_value_t = 3.0)]
    pub threshold: f64,
    /// Weight the loss by inverse class frequency.
    #[arg(long)]
    pub weighted: bool,
    /// Add back-translated training copies.
    #[arg(long)]
    pub backtranslate: bool,
    /// Append topic words to every input.
    #[arg(long)]
    pub topic: bool,
    /// Use this topic model instead of fitting one on the training split.
    #[arg(long, value_name = "FILE", requires = "topic")]
    pub topics: Option<PathBuf>,
    /// Where a freshly fitted topic model is saved; defaults to `<out>.topics.json`.
    #[arg(long, value_name = "FILE")]
    pub topics_out: Option<PathBuf>,
    /// Write the held-out test split here.
    #[arg(long, value_name = "FILE")]
    pub test_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Share of the training split held out for early stopping.
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 2)]
    pub patience: usize,
    #[arg(long, default_value_t = 1 << 18)]
    pub hash_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_english_filter: bool,
    #[command(flatten)]
    pub translator: TranslatorArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalFormat {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model file, or an `http(s)://` classifier endpoint.
    #[arg(long, value_name = "FILE|URL")]
    pub model: String,
    /// Class list for an HTTP endpoint, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Labeled examples (JSON lines).
    #[arg(long, value_name = "FILE")]
    pub data: PathBuf,
    /// Positive class for binary metrics; macro averages otherwise.
    #[arg(long)]
    pub positive: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub topics: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EvalFormat::Json)]
    pub format: EvalFormat,
    /// Model name shown in the report; the model path by default.
    #[arg(long)]
    pub name: Option<String>,
    /// Record that the model was trained with back-translation.
    #[arg(long)]
    pub backtranslated: bool,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Posts as JSON lines or CSV.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub detector: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub target: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub topics: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[arg(long, default_value = "json")]
    pub format: String,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    #[arg(long, default_value_t = 512)]
    pub batch_size: usize,
    #[arg(long)]
    pub no_english_filter: bool,
    /// Detector description recorded in the report; the detector path by default.
    #[arg(long)]
    pub tag: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub text: String,
    /// Class to explain; the predicted class by default.
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write an HTML fragment with tokens colored by weight.
    #[arg(long, value_name = "FILE")]
    pub html: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 6)]
    pub features: usize,
    #[arg(long)]
    pub kernel_width: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Enumerate every token subset (short texts only).
    #[arg(long)]
    pub exhaustive: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Distribution written by `run`.
    #[arg(long = "input", value_name = "FILE")]
    pub input: PathBuf,
    #[arg(long, default_value = "text")]
    pub format: String,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn parse_cli(args: Vec<String>) -> CliResult<Cli> {
    let mut cmd = Cli::command();
    if let Some(path) = config::config_path(&args) {
        let cfg = config::load(path.as_ref())?;
        cmd = config::apply(cmd, &cfg)?;
    }
    let matches = match cmd.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind as K;
            let code = match e.kind() {
                K::DisplayHelp | K::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return Err(CliError { code, message: String::new() });
        }
    };
    Cli::from_arg_matches(&matches).map_err(|e| CliError::usage(e.to_string()))
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match parse_cli(args) {
        Ok(c) => c,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {}", e.message);
            }
            return ExitCode::from(e.code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
