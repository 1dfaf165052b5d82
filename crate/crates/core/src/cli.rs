//! The `zen` command line.
//!
//! Exit codes: 0 on success, 1 for usage and validation errors (bad flags,
//! missing inputs, malformed configs or data), 2 for runtime failures.
//!
//! Training commands read an optional TOML run config (`--config`); flags
//! given on the command line override the file, which overrides built-in
//! defaults. The merged config is written to `<out>/run_config.toml`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize, single_segment, Corpus, Vocab};
use crate::error::Error;
use crate::finetune::data::{classification_labels, load_classification, load_tagging, scheme_labels};
use crate::finetune::spans::split_label;
use crate::finetune::{
    finetune, score_classification, score_tagging, FinetuneConfig, Scheme, TaskData, TaskKind, TaskModel, TaskSpec,
};
use crate::lexicon::{extract_sharded, NgramLexicon, DEFAULT_N_MAX};
use crate::matcher::Matcher;
use crate::model::checkpoint::{self, NO_LEXICON};
use crate::model::heatmap::export_ngram_weights;
use crate::model::{EncoderInput, ModelConfig, ZenModel};
use crate::pretrain::{Trainer, TrainConfig};

pub const RUN_CONFIG_FILE: &str = "run_config.toml";
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Invalid(_) | Error::Parse { .. } | Error::UnknownLabel { .. } | Error::LexiconMismatch { .. } => {
                CliError::Usage(e.to_string())
            }
            Error::Io { .. } | Error::NonFinite { .. } | Error::Shape { .. } => CliError::Runtime(e.to_string()),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn dflt(what: &str, value: impl fmt::Display) -> String {
    format!("{what} [default: {value}]")
}

#[derive(Parser, Debug)]
#[command(name = "zen", version, about = "N-gram enhanced character encoder: lexicons, pretraining, fine-tuning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a character vocabulary from a corpus.
    BuildVocab(BuildVocabArgs),
    /// Extract an n-gram lexicon from a corpus.
    BuildLexicon(BuildLexiconArgs),
    /// Pretrain with masked-token and next-sentence objectives.
    Pretrain(PretrainArgs),
    /// Fine-tune a tagging or classification head.
    Finetune(FinetuneArgs),
    /// Score a fine-tuned model, or a prediction file against a gold file.
    Eval(EvalArgs),
    /// Run the fine-tuning pipeline once per value of a lexicon parameter.
    Sweep(SweepArgs),
    /// Write per-layer n-gram attention weights for a text.
    ExportHeatmap(HeatmapArgs),
}

#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output vocabulary file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
}

#[derive(Args, Debug)]
pub struct BuildLexiconArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output lexicon file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub n_min: usize,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    pub n_max: usize,
    #[arg(long, default_value_t = 5)]
    pub threshold: u64,
    /// Counting threads.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Args, Debug, Default)]
pub struct ModelFlags {
    #[arg(long, help = dflt("Character backbone layers", ModelConfig::default().char_layers))]
    pub char_layers: Option<usize>,
    #[arg(long, help = dflt("N-gram encoder layers", ModelConfig::default().ngram_layers))]
    pub ngram_layers: Option<usize>,
    #[arg(long, help = dflt("Hidden size", ModelConfig::default().hidden))]
    pub hidden: Option<usize>,
    #[arg(long, help = dflt("Attention heads", ModelConfig::default().heads))]
    pub heads: Option<usize>,
    #[arg(long, help = dflt("Feed-forward size", ModelConfig::default().ffn))]
    pub ffn: Option<usize>,
    #[arg(long, help = dflt("Maximum input length in tokens", ModelConfig::default().max_len))]
    pub max_len: Option<usize>,
    #[arg(long, help = dflt("Dropout rate", ModelConfig::default().dropout))]
    pub dropout: Option<f64>,
}

impl ModelFlags {
    fn apply(&self, m: &mut ModelConfig) {
        set(&mut m.char_layers, self.char_layers);
        set(&mut m.ngram_layers, self.ngram_layers);
        set(&mut m.hidden, self.hidden);
        set(&mut m.heads, self.heads);
        set(&mut m.ffn, self.ffn);
        set(&mut m.max_len, self.max_len);
        set(&mut m.dropout, self.dropout);
    }
}

#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    #[arg(long, help = dflt("Instances per step", TrainConfig::default().batch_size))]
    pub batch_size: Option<usize>,
    #[arg(long, help = dflt("Optimizer steps", TrainConfig::default().steps))]
    pub steps: Option<usize>,
    #[arg(long, help = dflt("Peak learning rate", TrainConfig::default().peak_lr))]
    pub peak_lr: Option<f64>,
    #[arg(long, help = dflt("Warmup fraction of steps", TrainConfig::default().warmup_frac))]
    pub warmup_frac: Option<f64>,
    #[arg(long, help = dflt("Decoupled weight decay", TrainConfig::default().weight_decay))]
    pub weight_decay: Option<f64>,
    #[arg(long, help = dflt("Fraction of characters masked", TrainConfig::default().mask_rate))]
    pub mask_rate: Option<f64>,
    #[arg(long, help = dflt("N-gram occurrences kept per instance", TrainConfig::default().max_ngrams))]
    pub max_ngrams: Option<usize>,
    #[arg(long, help = dflt("Metric row cadence in steps", TrainConfig::default().log_every))]
    pub log_every: Option<usize>,
    #[arg(long, help = dflt("Checkpoint cadence in steps, 0 for final only", TrainConfig::default().checkpoint_every))]
    pub checkpoint_every: Option<usize>,
}

impl TrainFlags {
    fn apply(&self, t: &mut TrainConfig) {
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.steps, self.steps);
        set(&mut t.peak_lr, self.peak_lr);
        set(&mut t.warmup_frac, self.warmup_frac);
        set(&mut t.weight_decay, self.weight_decay);
        set(&mut t.mask_rate, self.mask_rate);
        set(&mut t.max_ngrams, self.max_ngrams);
        set(&mut t.log_every, self.log_every);
        set(&mut t.checkpoint_every, self.checkpoint_every);
    }
}

#[derive(Args, Debug, Default)]
pub struct FinetuneFlags {
    #[arg(long, help = dflt("Training epochs", FinetuneConfig::default().epochs))]
    pub epochs: Option<usize>,
    #[arg(long, help = dflt("Examples per step", FinetuneConfig::default().batch_size))]
    pub batch_size: Option<usize>,
    #[arg(long, help = dflt("Peak learning rate", FinetuneConfig::default().peak_lr))]
    pub peak_lr: Option<f64>,
    #[arg(long, help = dflt("Warmup fraction of steps", FinetuneConfig::default().warmup_frac))]
    pub warmup_frac: Option<f64>,
    #[arg(long, help = dflt("Decoupled weight decay", FinetuneConfig::default().weight_decay))]
    pub weight_decay: Option<f64>,
    #[arg(long, help = dflt("N-gram occurrences kept per input", FinetuneConfig::default().max_ngrams))]
    pub max_ngrams: Option<usize>,
    /// Stop once the dev metric reaches this value [default: never].
    #[arg(long)]
    pub stop_at: Option<f64>,
}

impl FinetuneFlags {
    fn apply(&self, f: &mut FinetuneConfig) {
        set(&mut f.epochs, self.epochs);
        set(&mut f.batch_size, self.batch_size);
        set(&mut f.peak_lr, self.peak_lr);
        set(&mut f.warmup_frac, self.warmup_frac);
        set(&mut f.weight_decay, self.weight_decay);
        set(&mut f.max_ngrams, self.max_ngrams);
        if self.stop_at.is_some() {
            f.stop_at = self.stop_at;
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct TaskFlags {
    #[arg(long, value_enum, help = dflt("Task family", "tagging"))]
    pub task_type: Option<TaskType>,
    #[arg(long, value_enum, help = dflt("Tagging scheme", "bmes"))]
    pub scheme: Option<SchemeArg>,
    #[arg(long, help = dflt("Task name used in reports", TaskConfig::default().name))]
    pub task_name: Option<String>,
}

impl TaskFlags {
    fn apply(&self, t: &mut TaskConfig) {
        set(&mut t.task_type, self.task_type);
        if let Some(s) = self.scheme {
            t.scheme = s.into();
        }
        if let Some(n) = &self.task_name {
            t.name = n.clone();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    #[default]
    Tagging,
    Classification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Bmes,
    Bio,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Bmes => Scheme::Bmes,
            SchemeArg::Bio => Scheme::Bio,
        }
    }
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// TOML run config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Vocabulary file [default: built from the corpus].
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Lexicon file, or `none` for the zero-lexicon baseline [default: none].
    #[arg(long)]
    pub lexicon: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Continue from this checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Dev data [default: the training data].
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Pretrained checkpoint directory [default: random initialisation].
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Vocabulary file; required with --checkpoint [default: built from the training data].
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Lexicon file or `none` [default: none].
    #[arg(long)]
    pub lexicon: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub task: TaskFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub finetune: FinetuneFlags,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Fine-tuned checkpoint directory.
    #[arg(long, requires_all = ["vocab", "data"], conflicts_with_all = ["gold", "pred"])]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value = NO_LEXICON)]
    pub lexicon: String,
    /// Labelled data to score the checkpoint on.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = crate::matcher::DEFAULT_MAX_NGRAMS)]
    pub max_ngrams: usize,
    /// Gold file (same format as the task data).
    #[arg(long, requires = "pred")]
    pub gold: Option<PathBuf>,
    /// Prediction file aligned with --gold.
    #[arg(long, requires = "gold")]
    pub pred: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tagging")]
    pub task_type: TaskType,
    #[arg(long, value_enum, default_value = "bmes")]
    pub scheme: SchemeArg,
    /// Directory for metrics.txt.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Threshold,
    MaxNgrams,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    /// Corpus for lexicon extraction (and pretraining with --pretrain-steps).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Fixed lexicon for a max-ngrams sweep [default: extracted from --corpus].
    #[arg(long)]
    pub lexicon: Option<String>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Test data [default: the dev data].
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    /// Pretraining steps on --corpus before each fine-tuning run [default: 0].
    #[arg(long)]
    pub pretrain_steps: Option<usize>,
    #[arg(long, help = dflt("Lexicon frequency threshold", LexiconConfig::default().threshold))]
    pub threshold: Option<u64>,
    /// Run values on separate threads.
    #[arg(long)]
    pub parallel: bool,
    #[command(flatten)]
    pub task: TaskFlags,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub finetune: FinetuneFlags,
}

#[derive(Args, Debug)]
pub struct HeatmapArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub lexicon: String,
    /// Text file; its normalized content is one input.
    #[arg(long)]
    pub text: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::matcher::DEFAULT_MAX_NGRAMS)]
    pub max_ngrams: usize,
}

/// Merged configuration of a training command.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub lexicon: LexiconConfig,
    pub task: TaskConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub finetune: FinetuneConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    /// Lexicon file or `none`.
    pub lexicon: Option<String>,
    pub checkpoint: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LexiconConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub threshold: u64,
}

impl Default for LexiconConfig {
    fn default() -> Self {
        Self {
            n_min: 2,
            n_max: DEFAULT_N_MAX,
            threshold: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    #[serde(rename = "type")]
    pub task_type: TaskType,
    pub scheme: Scheme,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            name: "task".into(),
            task_type: TaskType::Tagging,
            scheme: Scheme::Bmes,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
    if v.is_some() {
        slot.clone_from(v);
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| usage(format!("--{flag} is required (flag or config)")))
}

fn check_exists(p: &Path) -> CliResult {
    if p.exists() {
        Ok(())
    } else {
        Err(usage(format!("{}: no such file or directory", p.display())))
    }
}

/// `None` for the literal `none` (or no lexicon at all).
fn lexicon_path(arg: &Option<String>) -> Option<PathBuf> {
    match arg.as_deref() {
        None | Some(NO_LEXICON) => None,
        Some(p) => Some(PathBuf::from(p)),
    }
}

fn load_lexicon(arg: &Option<String>) -> CliResult<Option<NgramLexicon>> {
    match lexicon_path(arg) {
        None => Ok(None),
        Some(p) => {
            check_exists(&p)?;
            Ok(Some(NgramLexicon::load(&p)?))
        }
    }
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> CliResult {
    fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let text = cfg.to_toml();
    log::info!("effective config:\n{text}");
    write(&out.join(RUN_CONFIG_FILE), &text)
}

fn write(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Parse arguments and run; returns the process exit code.
pub fn main() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::BuildVocab(a) => build_vocab(a),
        Command::BuildLexicon(a) => build_lexicon(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Finetune(a) => finetune_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::ExportHeatmap(a) => export_heatmap(a),
    }
}

fn build_vocab(a: BuildVocabArgs) -> CliResult {
    check_exists(&a.corpus)?;
    let corpus = Corpus::load(&a.corpus)?;
    let vocab = Vocab::build(corpus.sentences(), a.min_count);
    vocab.save(&a.out)?;
    println!("vocabulary: {} tokens", vocab.len());
    Ok(())
}

fn build_lexicon(a: BuildLexiconArgs) -> CliResult {
    check_exists(&a.corpus)?;
    let corpus = Corpus::load(&a.corpus)?;
    let lines: Vec<String> = corpus.sentences().map(str::to_owned).collect();
    let lex = extract_sharded(&lines, a.n_min, a.n_max, a.threshold, a.workers)?;
    lex.save(&a.out)?;
    println!("entries: {}", lex.len());
    for (n, count) in lex.size_by_length() {
        println!("n={n}: {count}");
    }
    Ok(())
}

fn pretrain(a: PretrainArgs) -> CliResult {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    set_opt(&mut cfg.paths.corpus, &a.corpus);
    set_opt(&mut cfg.paths.vocab, &a.vocab);
    set_opt(&mut cfg.paths.lexicon, &a.lexicon);
    set_opt(&mut cfg.paths.out, &a.out);
    set_opt(&mut cfg.paths.checkpoint, &a.resume);
    a.model.apply(&mut cfg.model);
    a.train.apply(&mut cfg.train);
    cfg.seed = a.seed;
    cfg.train.seed = a.seed;

    let corpus_path = require(&cfg.paths.corpus, "corpus")?.to_path_buf();
    let out = require(&cfg.paths.out, "out")?.to_path_buf();
    check_exists(&corpus_path)?;
    for p in [&cfg.paths.vocab, &cfg.paths.checkpoint].into_iter().flatten() {
        check_exists(p)?;
    }
    let lexicon = load_lexicon(&cfg.paths.lexicon)?;
    let corpus = Corpus::load(&corpus_path)?;
    let vocab = match &cfg.paths.vocab {
        Some(p) => Vocab::load(p)?,
        None => Vocab::build(corpus.sentences(), 1),
    };
    cfg.model.vocab_size = vocab.len();
    cfg.model.lexicon_size = lexicon.as_ref().map_or(0, NgramLexicon::len);
    cfg.model.validate()?;
    cfg.train.validate()?;
    prepare_out(&out, &cfg)?;
    vocab.save(&out.join("vocab.txt"))?;

    let mut trainer = match &cfg.paths.checkpoint {
        Some(dir) => Trainer::resume(dir, lexicon, &corpus, vocab, cfg.train.clone())?,
        None => Trainer::new(ZenModel::new(cfg.model.clone(), cfg.seed)?, lexicon, &corpus, vocab, cfg.train.clone())?,
    };
    let hist = trainer.run(Some(&out))?;
    if let Some(m) = hist.last() {
        println!(
            "step {}: total {:.6} mlm {:.6} nsp {:.6} mlm_acc {:.4}",
            m.step, m.total_loss, m.mlm_loss, m.nsp_loss, m.mlm_acc
        );
    }
    println!("checkpoint: {}", out.join(crate::pretrain::FINAL_CHECKPOINT).display());
    Ok(())
}

fn task_spec(task: &TaskConfig, train_path: &Path) -> CliResult<(TaskSpec, TaskData)> {
    Ok(match task.task_type {
        TaskType::Tagging => {
            let exs = load_tagging(train_path)?;
            let mut types: Vec<&str> = exs
                .iter()
                .flat_map(|e| e.labels.iter().map(|l| split_label(l).1))
                .filter(|t| !t.is_empty())
                .collect::<HashSet<_>>()
                .into_iter()
                .collect();
            types.sort_unstable();
            let spec = TaskSpec {
                name: task.name.clone(),
                kind: TaskKind::Tagging { scheme: task.scheme },
                labels: scheme_labels(task.scheme, &types),
            };
            (spec, TaskData::Tagging(exs))
        }
        TaskType::Classification => {
            let text = fs::read_to_string(train_path).map_err(|e| Error::io(train_path, e))?;
            let labels = classification_labels(&text);
            let exs = load_classification(train_path, &labels)?;
            let spec = TaskSpec {
                name: task.name.clone(),
                kind: TaskKind::Classification,
                labels,
            };
            (spec, TaskData::Classification(exs))
        }
    })
}

fn load_task_data(spec: &TaskSpec, path: &Path) -> CliResult<TaskData> {
    Ok(match spec.kind {
        TaskKind::Tagging { .. } => TaskData::Tagging(load_tagging(path)?),
        TaskKind::Classification => TaskData::Classification(load_classification(path, &spec.labels)?),
    })
}

fn data_text(data: &TaskData) -> Vec<String> {
    match data {
        TaskData::Tagging(v) => v.iter().map(|e| e.text()).collect(),
        TaskData::Classification(v) => v
            .iter()
            .map(|e| format!("{}{}", e.text_a, e.text_b.as_deref().unwrap_or("")))
            .collect(),
    }
}

fn finetune_cmd(a: FinetuneArgs) -> CliResult {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    set_opt(&mut cfg.paths.train, &a.train);
    set_opt(&mut cfg.paths.dev, &a.dev);
    set_opt(&mut cfg.paths.checkpoint, &a.checkpoint);
    set_opt(&mut cfg.paths.vocab, &a.vocab);
    set_opt(&mut cfg.paths.lexicon, &a.lexicon);
    set_opt(&mut cfg.paths.out, &a.out);
    a.task.apply(&mut cfg.task);
    a.model.apply(&mut cfg.model);
    a.finetune.apply(&mut cfg.finetune);
    cfg.seed = a.seed;
    cfg.finetune.seed = a.seed;

    let train_path = require(&cfg.paths.train, "train")?.to_path_buf();
    let out = require(&cfg.paths.out, "out")?.to_path_buf();
    check_exists(&train_path)?;
    for p in [&cfg.paths.dev, &cfg.paths.checkpoint, &cfg.paths.vocab].into_iter().flatten() {
        check_exists(p)?;
    }
    if cfg.paths.checkpoint.is_some() && cfg.paths.vocab.is_none() {
        return Err(usage("--vocab is required with --checkpoint"));
    }
    cfg.finetune.validate()?;
    let lexicon = load_lexicon(&cfg.paths.lexicon)?;
    let (spec, train) = task_spec(&cfg.task, &train_path)?;
    let dev = match &cfg.paths.dev {
        Some(p) => load_task_data(&spec, p)?,
        None => train.clone(),
    };
    let vocab = match &cfg.paths.vocab {
        Some(p) => Vocab::load(p)?,
        None => Vocab::build(data_text(&train), 1),
    };
    let model = match &cfg.paths.checkpoint {
        Some(dir) => {
            cfg.model = checkpoint::read_meta(dir)?.model;
            TaskModel::from_pretrained(dir, vocab.clone(), lexicon, spec.clone(), cfg.finetune.max_ngrams, cfg.seed)?
        }
        None => {
            cfg.model.vocab_size = vocab.len();
            cfg.model.lexicon_size = lexicon.as_ref().map_or(0, NgramLexicon::len);
            cfg.model.validate()?;
            let m = ZenModel::new(cfg.model.clone(), cfg.seed)?;
            TaskModel::new(m, vocab.clone(), lexicon, spec.clone(), cfg.finetune.max_ngrams, cfg.seed)?
        }
    };
    prepare_out(&out, &cfg)?;
    vocab.save(&out.join("vocab.txt"))?;
    let outcome = finetune(model, &train, &dev, &cfg.finetune)?;
    write(&out.join("finetune_log.csv"), &outcome.history_csv())?;
    outcome.model.save(&out.join("best"), outcome.best_epoch)?;
    let report = outcome.best().dev.report(&spec.name);
    write(&out.join("dev_metrics.txt"), &report)?;
    print!("{report}");
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult {
    let metrics_and_name = if let (Some(gold), Some(pred)) = (&a.gold, &a.pred) {
        check_exists(gold)?;
        check_exists(pred)?;
        let name = gold.file_stem().map_or("eval".into(), |s| s.to_string_lossy().into_owned());
        let m = match a.task_type {
            TaskType::Tagging => {
                let g = load_tagging(gold)?;
                let p = load_tagging(pred)?;
                if g.len() != p.len() {
                    return Err(usage(format!("{} gold sentences but {} predicted", g.len(), p.len())));
                }
                if let Some(i) = g.iter().zip(&p).position(|(x, y)| x.chars != y.chars) {
                    return Err(usage(format!("sentence {i}: gold and prediction texts differ")));
                }
                let gl: Vec<Vec<String>> = g.into_iter().map(|e| e.labels).collect();
                let pl: Vec<Vec<String>> = p.into_iter().map(|e| e.labels).collect();
                score_tagging(a.scheme.into(), &gl, &pl)?
            }
            TaskType::Classification => {
                let gt = fs::read_to_string(gold).map_err(|e| Error::io(gold, e))?;
                let pt = fs::read_to_string(pred).map_err(|e| Error::io(pred, e))?;
                let mut labels = classification_labels(&gt);
                for l in classification_labels(&pt) {
                    if !labels.contains(&l) {
                        labels.push(l);
                    }
                }
                let g = load_classification(gold, &labels)?;
                let p = load_classification(pred, &labels)?;
                let gl: Vec<usize> = g.iter().map(|e| e.label).collect();
                let pl: Vec<usize> = p.iter().map(|e| e.label).collect();
                score_classification(&gl, &pl)?
            }
        };
        (m, name)
    } else {
        let (Some(ckpt), Some(vocab), Some(data)) = (&a.checkpoint, &a.vocab, &a.data) else {
            return Err(usage("give either --checkpoint, --vocab and --data, or --gold and --pred"));
        };
        for p in [ckpt, vocab, data] {
            check_exists(p)?;
        }
        let lexicon = load_lexicon(&Some(a.lexicon.clone()))?;
        let model = TaskModel::load(ckpt, Vocab::load(vocab)?, lexicon, a.max_ngrams)?;
        let data = load_task_data(model.task(), data)?;
        (model.evaluate(&data)?, model.task().name.clone())
    };
    let (metrics, name) = metrics_and_name;
    let report = metrics.report(&name);
    if let Some(out) = &a.out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write(&out.join("metrics.txt"), &report)?;
    }
    print!("{report}");
    Ok(())
}

/// Validated sweep values, rejected before any run starts.
pub fn parse_sweep_values(param: SweepParam, values: &[String]) -> CliResult<Vec<u64>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(values.len());
    for v in values {
        let x: u64 = v
            .trim()
            .parse()
            .map_err(|_| usage(format!("sweep value {v:?} is not a non-negative integer")))?;
        if param == SweepParam::Threshold && x == 0 {
            return Err(usage("threshold values must be at least 1"));
        }
        if !seen.insert(x) {
            return Err(usage(format!("duplicate sweep value {x}")));
        }
        out.push(x);
    }
    if out.is_empty() {
        return Err(usage("no sweep values given"));
    }
    Ok(out)
}

struct SweepRun<'a> {
    cfg: &'a RunConfig,
    corpus: Option<&'a Corpus>,
    spec: &'a TaskSpec,
    train: &'a TaskData,
    dev: &'a TaskData,
    test: &'a TaskData,
    vocab: &'a Vocab,
    pretrain_steps: usize,
}

impl SweepRun<'_> {
    fn run(&self, lexicon: Option<NgramLexicon>, max_ngrams: usize) -> std::result::Result<(f64, f64), Error> {
        let cfg = self.cfg;
        let mut model_cfg = cfg.model.clone();
        model_cfg.vocab_size = self.vocab.len();
        model_cfg.lexicon_size = lexicon.as_ref().map_or(0, NgramLexicon::len);
        let mut model = ZenModel::new(model_cfg, cfg.seed)?;
        if self.pretrain_steps > 0 {
            let corpus = self.corpus.ok_or_else(|| Error::Invalid("pretraining needs --corpus".into()))?;
            let tc = TrainConfig {
                steps: self.pretrain_steps,
                max_ngrams,
                seed: cfg.seed,
                ..cfg.train.clone()
            };
            let mut t = Trainer::new(model, lexicon.clone(), corpus, self.vocab.clone(), tc)?;
            t.run(None)?;
            model = t.into_model();
        }
        let ft = FinetuneConfig {
            max_ngrams,
            seed: cfg.seed,
            ..cfg.finetune.clone()
        };
        let tm = TaskModel::new(model, self.vocab.clone(), lexicon, self.spec.clone(), max_ngrams, cfg.seed)?;
        let outcome = finetune(tm, self.train, self.dev, &ft)?;
        let test = outcome.model.evaluate(self.test)?.primary();
        Ok((outcome.best().dev.primary(), test))
    }
}

fn sweep(a: SweepArgs) -> CliResult {
    let values = parse_sweep_values(a.param, &a.values)?;
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    set_opt(&mut cfg.paths.corpus, &a.corpus);
    set_opt(&mut cfg.paths.lexicon, &a.lexicon);
    set_opt(&mut cfg.paths.train, &a.train);
    set_opt(&mut cfg.paths.dev, &a.dev);
    set_opt(&mut cfg.paths.test, &a.test);
    set_opt(&mut cfg.paths.out, &a.out);
    set(&mut cfg.lexicon.threshold, a.threshold);
    a.task.apply(&mut cfg.task);
    a.model.apply(&mut cfg.model);
    a.finetune.apply(&mut cfg.finetune);
    cfg.seed = a.seed;
    cfg.train.seed = a.seed;
    cfg.finetune.seed = a.seed;
    let pretrain_steps = a.pretrain_steps.unwrap_or(0);

    let train_path = require(&cfg.paths.train, "train")?.to_path_buf();
    let out = require(&cfg.paths.out, "out")?.to_path_buf();
    check_exists(&train_path)?;
    for p in [&cfg.paths.corpus, &cfg.paths.dev, &cfg.paths.test].into_iter().flatten() {
        check_exists(p)?;
    }
    let fixed_lexicon = load_lexicon(&cfg.paths.lexicon)?;
    let needs_corpus = a.param == SweepParam::Threshold || fixed_lexicon.is_none() || pretrain_steps > 0;
    if needs_corpus && cfg.paths.corpus.is_none() {
        return Err(usage("--corpus is required for this sweep"));
    }
    cfg.finetune.validate()?;
    let corpus = cfg.paths.corpus.as_deref().map(Corpus::load).transpose()?;
    let (spec, train) = task_spec(&cfg.task, &train_path)?;
    let dev = match &cfg.paths.dev {
        Some(p) => load_task_data(&spec, p)?,
        None => train.clone(),
    };
    let test = match &cfg.paths.test {
        Some(p) => load_task_data(&spec, p)?,
        None => dev.clone(),
    };
    let mut texts = data_text(&train);
    if let Some(c) = &corpus {
        texts.extend(c.sentences().map(str::to_owned));
    }
    let vocab = Vocab::build(&texts, 1);
    prepare_out(&out, &cfg)?;
    vocab.save(&out.join("vocab.txt"))?;

    let lines: Vec<String> = corpus.iter().flat_map(|c| c.sentences().map(str::to_owned)).collect();
    let lc = &cfg.lexicon;
    let shared = match (a.param, &fixed_lexicon) {
        (SweepParam::MaxNgrams, Some(l)) => Some(l.clone()),
        (SweepParam::MaxNgrams, None) => Some(extract_sharded(&lines, lc.n_min, lc.n_max, lc.threshold, 1)?),
        (SweepParam::Threshold, _) => None,
    };
    let runner = SweepRun {
        cfg: &cfg,
        corpus: corpus.as_ref(),
        spec: &spec,
        train: &train,
        dev: &dev,
        test: &test,
        vocab: &vocab,
        pretrain_steps,
    };
    let one = |v: u64| -> std::result::Result<(f64, f64), Error> {
        match a.param {
            SweepParam::Threshold => {
                let lex = extract_sharded(&lines, lc.n_min, lc.n_max, v, 1)?;
                runner.run(Some(lex), cfg.finetune.max_ngrams)
            }
            SweepParam::MaxNgrams => runner.run(shared.clone(), v as usize),
        }
    };
    let results: Vec<std::result::Result<(f64, f64), Error>> = if a.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = values.iter().map(|&v| s.spawn(move || one(v))).collect();
            handles.into_iter().map(|h| h.join().expect("sweep thread panicked")).collect()
        })
    } else {
        values.iter().map(|&v| one(v)).collect()
    };
    let mut csv = String::from("value,dev_metric,test_metric\n");
    for (v, r) in values.iter().zip(results) {
        let (dev_m, test_m) = r?;
        csv.push_str(&format!("{v},{dev_m:.6},{test_m:.6}\n"));
    }
    write(&out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn export_heatmap(a: HeatmapArgs) -> CliResult {
    for p in [&a.checkpoint, &a.vocab, &a.text] {
        check_exists(p)?;
    }
    let lexicon = load_lexicon(&Some(a.lexicon.clone()))?;
    let ckpt = checkpoint::load(&a.checkpoint)?;
    ckpt.require_lexicon(&lexicon.as_ref().map_or_else(|| NO_LEXICON.to_string(), NgramLexicon::content_hash))?;
    let vocab = Vocab::load(&a.vocab)?;
    if vocab.len() != ckpt.model.config().vocab_size {
        return Err(usage(format!(
            "vocabulary of {} does not match the checkpoint's {}",
            vocab.len(),
            ckpt.model.config().vocab_size
        )));
    }
    let raw = fs::read_to_string(&a.text).map_err(|e| Error::io(&a.text, e))?;
    let text = normalize(&raw);
    let (ids, segs, chars) = single_segment(&text, &vocab, ckpt.model.config().max_len);
    let lex = lexicon.unwrap_or_else(|| NgramLexicon::empty(2, DEFAULT_N_MAX, 1));
    let m = Matcher::new(&lex).find(&chars, a.max_ngrams);
    let input = EncoderInput {
        token_ids: &ids,
        segment_ids: &segs,
        ngrams: Some(&m),
    };
    let weights = export_ngram_weights(&ckpt.model, &input)?;
    if weights.is_empty() {
        eprintln!("warning: no lexicon n-grams occur in the text; the table is empty");
    }
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let path = a.out.join("heatmap.tsv");
    write(&path, &weights.to_tsv(&lex))?;
    println!("{} occurrences x {} layers -> {}", weights.occurrences.len(), weights.layers.len(), path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn sweep_values_validated() {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(parse_sweep_values(SweepParam::Threshold, &v(&["5", "15", "40"])).unwrap(), [5, 15, 40]);
        assert!(matches!(
            parse_sweep_values(SweepParam::Threshold, &v(&["5", "5"])),
            Err(CliError::Usage(_))
        ));
        assert!(parse_sweep_values(SweepParam::MaxNgrams, &v(&["0", "8"])).is_ok());
        assert!(parse_sweep_values(SweepParam::Threshold, &v(&["0"])).is_err());
        assert!(parse_sweep_values(SweepParam::MaxNgrams, &v(&["x"])).is_err());
    }

    #[test]
    fn precedence_cli_over_file_over_default() {
        let file: RunConfig = toml::from_str("[train]\nsteps = 7\nbatch_size = 3\n").unwrap();
        let mut cfg = file.clone();
        TrainFlags {
            steps: Some(9),
            ..Default::default()
        }
        .apply(&mut cfg.train);
        assert_eq!(cfg.train.steps, 9);
        assert_eq!(cfg.train.batch_size, 3);
        assert_eq!(cfg.train.peak_lr, TrainConfig::default().peak_lr);
    }

    #[test]
    fn run_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.paths.lexicon = Some("none".into());
        cfg.finetune.stop_at = Some(0.99);
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert!(toml::from_str::<RunConfig>("[train]\nbogus = 1\n").is_err());
    }

    #[test]
    fn help_lists_defaults() {
        let help = Cli::command()
            .find_subcommand_mut("pretrain")
            .unwrap()
            .render_long_help()
            .to_string();
        assert!(help.contains("--steps"));
        assert!(help.contains(&format!("[default: {}]", TrainConfig::default().steps)));
    }
}
