//! Task heads, fine-tuning and evaluation.
//!
//! Tagging puts a per-position linear classifier on the final character
//! states; classification puts one on the pooled `[CLS]` state. N-grams are
//! matched on the full input (nothing is masked) and every parameter is
//! trained. No CRF: each position is an independent softmax.

pub mod data;
pub mod spans;

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use data::{ClassificationExample, TaggingExample};
pub use spans::{decode_spans, Scheme, Span, SpanScore};

use crate::corpus::{pair_segments, single_segment, Vocab};
use crate::error::{Error, Result};
use crate::lexicon::NgramLexicon;
use crate::matcher::{MatchState, Matcher, DEFAULT_MAX_NGRAMS};
use crate::model::checkpoint::{self, NO_LEXICON};
use crate::model::Linear;
use crate::model::{argmax_rows, EncoderInput, Mode, ZenModel};
use crate::numerics::{Gradients, Graph, Var};
use crate::pretrain::{learning_rate, AdamW};
use crate::seeds::rng_for;

pub const HEAD_NAME: &str = "task.classifier";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum TaskKind {
    Tagging { scheme: Scheme },
    Classification,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
    /// Closed label set; the head predicts an index into it.
    pub labels: Vec<String>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.labels.len() < 2 {
            return Err(Error::invalid(format!("task {} needs at least two labels", self.name)));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(l) = self.labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::invalid(format!("duplicate label {l:?}")));
        }
        Ok(())
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn to_table(&self) -> Result<toml::Table> {
        toml::Table::try_from(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_table(t: &toml::Table) -> Result<Self> {
        t.clone().try_into().map_err(|e: toml::de::Error| Error::invalid(e.to_string()))
    }
}

/// Training or evaluation data of one task.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskData {
    Tagging(Vec<TaggingExample>),
    Classification(Vec<ClassificationExample>),
}

impl TaskData {
    pub fn len(&self) -> usize {
        match self {
            TaskData::Tagging(v) => v.len(),
            TaskData::Classification(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Metrics {
    Tagging {
        precision: f64,
        recall: f64,
        f1: f64,
        /// Per-character label accuracy.
        accuracy: f64,
    },
    Classification {
        accuracy: f64,
    },
}

impl Metrics {
    /// Span F1 for tagging, accuracy for classification.
    pub fn primary(&self) -> f64 {
        match *self {
            Metrics::Tagging { f1, .. } => f1,
            Metrics::Classification { accuracy } => accuracy,
        }
    }

    pub fn primary_name(&self) -> &'static str {
        match self {
            Metrics::Tagging { .. } => "f1",
            Metrics::Classification { .. } => "accuracy",
        }
    }

    /// `key = value` lines, values to four decimals.
    pub fn report(&self, task: &str) -> String {
        let mut s = format!("task = {task:?}\n");
        match *self {
            Metrics::Tagging {
                precision,
                recall,
                f1,
                accuracy,
            } => {
                for (k, v) in [("precision", precision), ("recall", recall), ("f1", f1), ("accuracy", accuracy)] {
                    s.push_str(&format!("{k} = {v:.4}\n"));
                }
            }
            Metrics::Classification { accuracy } => s.push_str(&format!("accuracy = {accuracy:.4}\n")),
        }
        s
    }
}

/// Score predicted tag sequences against gold ones.
pub fn score_tagging<S: AsRef<str>, T: AsRef<str>>(scheme: Scheme, gold: &[Vec<S>], pred: &[Vec<T>]) -> Result<Metrics> {
    if gold.len() != pred.len() {
        return Err(Error::invalid(format!(
            "{} gold sequences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    let mut score = SpanScore::default();
    let (mut right, mut total) = (0usize, 0usize);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::invalid(format!("sequence {i}: lengths {} and {} differ", g.len(), p.len())));
        }
        score.add(&decode_spans(scheme, g), &decode_spans(scheme, p));
        right += g.iter().zip(p).filter(|(a, b)| a.as_ref() == b.as_ref()).count();
        total += g.len();
    }
    Ok(Metrics::Tagging {
        precision: score.precision(),
        recall: score.recall(),
        f1: score.f1(),
        accuracy: if total == 0 { 1.0 } else { right as f64 / total as f64 },
    })
}

pub fn score_classification(gold: &[usize], pred: &[usize]) -> Result<Metrics> {
    if gold.len() != pred.len() {
        return Err(Error::invalid("gold and predicted label counts differ"));
    }
    let right = gold.iter().zip(pred).filter(|(a, b)| a == b).count();
    Ok(Metrics::Classification {
        accuracy: if gold.is_empty() { 1.0 } else { right as f64 / gold.len() as f64 },
    })
}

/// A backbone plus task head, with the lexicon and vocabulary it reads.
pub struct TaskModel {
    model: ZenModel,
    task: TaskSpec,
    head: Linear,
    vocab: Vocab,
    lexicon: Option<NgramLexicon>,
    max_ngrams: usize,
}

impl TaskModel {
    /// Attach a freshly initialised head for `task`.
    pub fn new(
        mut model: ZenModel,
        vocab: Vocab,
        lexicon: Option<NgramLexicon>,
        task: TaskSpec,
        max_ngrams: usize,
        seed: u64,
    ) -> Result<Self> {
        task.validate()?;
        check_resources(&model, &vocab, lexicon.as_ref())?;
        let hidden = model.config().hidden;
        let head = model.add_linear(HEAD_NAME, hidden, task.labels.len(), seed)?;
        Ok(Self {
            model,
            task,
            head,
            vocab,
            lexicon,
            max_ngrams,
        })
    }

    /// Start from a pretrained checkpoint; fails unless `lexicon` is the
    /// one the checkpoint was trained with.
    pub fn from_pretrained(
        dir: &Path,
        vocab: Vocab,
        lexicon: Option<NgramLexicon>,
        task: TaskSpec,
        max_ngrams: usize,
        seed: u64,
    ) -> Result<Self> {
        let ckpt = checkpoint::load(dir)?;
        ckpt.require_lexicon(&lexicon_hash(lexicon.as_ref()))?;
        Self::new(ckpt.model, vocab, lexicon, task, max_ngrams, seed)
    }

    /// Reload a model written by [`TaskModel::save`].
    pub fn load(dir: &Path, vocab: Vocab, lexicon: Option<NgramLexicon>, max_ngrams: usize) -> Result<Self> {
        let ckpt = checkpoint::load(dir)?;
        ckpt.require_lexicon(&lexicon_hash(lexicon.as_ref()))?;
        let table = ckpt
            .meta
            .task
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("{} is not a fine-tuned checkpoint", dir.display())))?;
        let task = TaskSpec::from_table(table)?;
        check_resources(&ckpt.model, &vocab, lexicon.as_ref())?;
        let p = ckpt.model.params();
        let id = |n: &str| {
            p.id(&format!("{HEAD_NAME}.{n}"))
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks {HEAD_NAME}.{n}")))
        };
        let head = Linear {
            weight: id("weight")?,
            bias: id("bias")?,
        };
        Ok(Self {
            model: ckpt.model,
            task,
            head,
            vocab,
            lexicon,
            max_ngrams,
        })
    }

    pub fn save(&self, dir: &Path, step: usize) -> Result<()> {
        checkpoint::save(
            dir,
            &self.model,
            &lexicon_hash(self.lexicon.as_ref()),
            step,
            Some(self.task.to_table()?),
            &[],
        )
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn model(&self) -> &ZenModel {
        &self.model
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn matcher(&self) -> Option<Matcher<'_>> {
        self.lexicon.as_ref().map(Matcher::new)
    }

    fn ngrams(&self, matcher: Option<&Matcher>, chars: &[Option<char>]) -> Option<MatchState> {
        matcher.map(|m| m.find(chars, self.max_ngrams))
    }

    /// Per-character logits (`n × labels`, `n` after truncation).
    fn tagging_logits<R: rand::Rng + ?Sized>(
        &self,
        g: &mut Graph,
        matcher: Option<&Matcher>,
        chars: &[char],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Var, usize)> {
        let text: String = chars.iter().collect();
        let (ids, segs, cs) = single_segment(&text, &self.vocab, self.model.config().max_len);
        let n = ids.len() - 2;
        let ngrams = self.ngrams(matcher, &cs);
        let input = EncoderInput {
            token_ids: &ids,
            segment_ids: &segs,
            ngrams: ngrams.as_ref(),
        };
        let out = self.model.forward(g, &input, mode, rng)?;
        let positions: Vec<usize> = (1..=n).collect();
        let rows = g.gather(out.char_states, &positions)?;
        Ok((self.head.forward(g, rows)?, n))
    }

    fn classification_logits<R: rand::Rng + ?Sized>(
        &self,
        g: &mut Graph,
        matcher: Option<&Matcher>,
        ex_a: &str,
        ex_b: Option<&str>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var> {
        let max_len = self.model.config().max_len;
        let (ids, segs, cs) = match ex_b {
            Some(b) => pair_segments(ex_a, b, &self.vocab, max_len),
            None => single_segment(ex_a, &self.vocab, max_len),
        };
        let ngrams = self.ngrams(matcher, &cs);
        let input = EncoderInput {
            token_ids: &ids,
            segment_ids: &segs,
            ngrams: ngrams.as_ref(),
        };
        let out = self.model.forward(g, &input, mode, rng)?;
        let pooled = self.model.pooled(g, out.char_states)?;
        self.head.forward(g, pooled)
    }

    fn label_ids(&self, ex: &TaggingExample, index: usize) -> Result<Vec<usize>> {
        ex.labels
            .iter()
            .map(|l| {
                self.task.label_id(l).ok_or_else(|| Error::UnknownLabel {
                    index,
                    label: l.clone(),
                })
            })
            .collect()
    }

    pub fn predict_tags(&self, chars: &[char]) -> Result<Vec<String>> {
        self.predict_tags_with(self.matcher().as_ref(), chars)
    }

    fn predict_tags_with(&self, matcher: Option<&Matcher>, chars: &[char]) -> Result<Vec<String>> {
        let TaskKind::Tagging { scheme } = self.task.kind else {
            return Err(Error::invalid("predict_tags on a classification task"));
        };
        let mut g = Graph::new(self.model.params());
        let mut rng = rng_for(0, "eval", 0);
        let (logits, n) = self.tagging_logits(&mut g, matcher, chars, Mode::Eval, &mut rng)?;
        let mut out: Vec<String> = argmax_rows(g.value(logits))
            .into_iter()
            .map(|k| self.task.labels[k].clone())
            .collect();
        out.resize(n.max(chars.len()), scheme.outside_label().to_string());
        Ok(out)
    }

    pub fn predict_class(&self, a: &str, b: Option<&str>) -> Result<usize> {
        self.predict_class_with(self.matcher().as_ref(), a, b)
    }

    fn predict_class_with(&self, matcher: Option<&Matcher>, a: &str, b: Option<&str>) -> Result<usize> {
        let mut g = Graph::new(self.model.params());
        let mut rng = rng_for(0, "eval", 0);
        let logits = self.classification_logits(&mut g, matcher, a, b, Mode::Eval, &mut rng)?;
        Ok(argmax_rows(g.value(logits))[0])
    }

    /// Predict every example and score against its gold labels.
    pub fn evaluate(&self, data: &TaskData) -> Result<Metrics> {
        let matcher = self.matcher();
        match (&self.task.kind, data) {
            (TaskKind::Tagging { scheme }, TaskData::Tagging(exs)) => {
                let pred = exs
                    .iter()
                    .map(|e| self.predict_tags_with(matcher.as_ref(), &e.chars))
                    .collect::<Result<Vec<_>>>()?;
                let gold: Vec<&Vec<String>> = exs.iter().map(|e| &e.labels).collect();
                let gold: Vec<Vec<&str>> = gold.iter().map(|v| v.iter().map(String::as_str).collect()).collect();
                score_tagging(*scheme, &gold, &pred)
            }
            (TaskKind::Classification, TaskData::Classification(exs)) => {
                let pred = exs
                    .iter()
                    .map(|e| self.predict_class_with(matcher.as_ref(), &e.text_a, e.text_b.as_deref()))
                    .collect::<Result<Vec<_>>>()?;
                let gold: Vec<usize> = exs.iter().map(|e| e.label).collect();
                score_classification(&gold, &pred)
            }
            _ => Err(Error::invalid("data kind does not match the task")),
        }
    }

    fn check_data(&self, data: &TaskData) -> Result<()> {
        match (&self.task.kind, data) {
            (TaskKind::Tagging { .. }, TaskData::Tagging(exs)) => {
                for (i, e) in exs.iter().enumerate() {
                    self.label_ids(e, i)?;
                }
                Ok(())
            }
            (TaskKind::Classification, TaskData::Classification(exs)) => {
                match exs.iter().position(|e| e.label >= self.task.labels.len()) {
                    Some(i) => Err(Error::UnknownLabel {
                        index: i,
                        label: exs[i].label.to_string(),
                    }),
                    None => Ok(()),
                }
            }
            _ => Err(Error::invalid("data kind does not match the task")),
        }
    }

    /// Loss of example `index` of `data` in training mode.
    fn example_loss<R: rand::Rng + ?Sized>(
        &self,
        g: &mut Graph,
        matcher: Option<&Matcher>,
        data: &TaskData,
        index: usize,
        rng: &mut R,
    ) -> Result<Var> {
        match data {
            TaskData::Tagging(exs) => {
                let ex = &exs[index];
                let labels = self.label_ids(ex, index)?;
                let (logits, n) = self.tagging_logits(g, matcher, &ex.chars, Mode::Train, rng)?;
                g.cross_entropy(logits, &labels[..n])
            }
            TaskData::Classification(exs) => {
                let ex = &exs[index];
                let logits = self.classification_logits(g, matcher, &ex.text_a, ex.text_b.as_deref(), Mode::Train, rng)?;
                g.cross_entropy(logits, &[ex.label])
            }
        }
    }
}

fn lexicon_hash(lexicon: Option<&NgramLexicon>) -> String {
    lexicon.map_or_else(|| NO_LEXICON.to_string(), NgramLexicon::content_hash)
}

fn check_resources(model: &ZenModel, vocab: &Vocab, lexicon: Option<&NgramLexicon>) -> Result<()> {
    if model.config().vocab_size != vocab.len() {
        return Err(Error::invalid(format!(
            "model vocab_size {} does not match vocabulary of {}",
            model.config().vocab_size,
            vocab.len()
        )));
    }
    if let Some(lex) = lexicon {
        if lex.len() != model.config().lexicon_size {
            return Err(Error::invalid(format!(
                "model lexicon_size {} does not match lexicon of {}",
                model.config().lexicon_size,
                lex.len()
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub max_ngrams: usize,
    /// Stop once the dev metric reaches this value.
    pub stop_at: Option<f64>,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            peak_lr: 5e-4,
            warmup_frac: 0.1,
            weight_decay: 0.01,
            seed: 0,
            max_ngrams: DEFAULT_MAX_NGRAMS,
            stop_at: None,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::invalid("peak_lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_frac) {
            return Err(Error::invalid("warmup_frac must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: Metrics,
}

pub struct FinetuneOutcome {
    /// Parameters of the best dev epoch.
    pub model: TaskModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl FinetuneOutcome {
    /// CSV `epoch,train_loss,dev_<metric>`.
    pub fn history_csv(&self) -> String {
        let name = self.history.first().map_or("metric", |r| r.dev.primary_name());
        let mut s = format!("epoch,train_loss,dev_{name}\n");
        for r in &self.history {
            s.push_str(&format!("{},{:.8},{:.6}\n", r.epoch, r.train_loss, r.dev.primary()));
        }
        s
    }

    pub fn best(&self) -> &EpochRecord {
        &self.history[self.best_epoch - 1]
    }
}

/// Train all parameters on `train`, scoring `dev` after every epoch and
/// keeping the parameters of the best-scoring epoch (earliest on ties).
pub fn finetune(mut model: TaskModel, train: &TaskData, dev: &TaskData, cfg: &FinetuneConfig) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    model.check_data(train)?;
    model.check_data(dev)?;
    model.max_ngrams = cfg.max_ngrams;
    let n = train.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut optim = AdamW::new(cfg.weight_decay);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, crate::numerics::ParamStore)> = None;
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_for(cfg.seed, "finetune-epoch", epoch as u64));
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::new(model.model.params().len());
            let scale = 1.0 / batch.len() as f64;
            {
                let matcher = model.matcher();
                for (k, &i) in batch.iter().enumerate() {
                    let mut rng = rng_for(cfg.seed, "finetune-dropout", (step * cfg.batch_size + k) as u64);
                    let mut g = Graph::new(model.model.params());
                    let loss = model.example_loss(&mut g, matcher.as_ref(), train, i, &mut rng)?;
                    loss_sum += g.value(loss).item();
                    grads.add_scaled(&g.backward(loss)?, scale);
                }
            }
            if !loss_sum.is_finite() || !grads.l2_norm().is_finite() {
                return Err(Error::NonFinite { step: step + 1 });
            }
            let lr = learning_rate(step, total, cfg.peak_lr, cfg.warmup_frac);
            optim.step(model.model.params_mut(), &grads, lr);
            step += 1;
        }
        let metrics = model.evaluate(dev)?;
        log::info!("epoch {epoch} loss {:.6} dev {:.4}", loss_sum / n as f64, metrics.primary());
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            dev: metrics,
        });
        if best.as_ref().is_none_or(|(score, _, _)| metrics.primary() > *score) {
            best = Some((metrics.primary(), epoch, model.model.params().clone()));
        }
        if cfg.stop_at.is_some_and(|t| metrics.primary() >= t) {
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    model.model.params_mut().load_values_from(&params)?;
    Ok(FinetuneOutcome {
        model,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny(vocab: usize) -> ModelConfig {
        ModelConfig {
            char_layers: 1,
            ngram_layers: 1,
            hidden: 16,
            heads: 2,
            ffn: 32,
            max_len: 16,
            vocab_size: vocab,
            lexicon_size: 0,
            dropout: 0.0,
            ..ModelConfig::default()
        }
    }

    fn seg_task() -> TaskSpec {
        TaskSpec {
            name: "seg".into(),
            kind: TaskKind::Tagging { scheme: Scheme::Bmes },
            labels: data::scheme_labels(Scheme::Bmes, &[]),
        }
    }

    #[test]
    fn task_spec_table_round_trip() {
        let t = seg_task();
        assert_eq!(TaskSpec::from_table(&t.to_table().unwrap()).unwrap(), t);
        let dup = TaskSpec {
            labels: vec!["a".into(), "a".into()],
            ..t
        };
        assert!(dup.validate().is_err());
    }

    #[test]
    fn report_has_four_decimals() {
        let m = Metrics::Tagging {
            precision: 1.0,
            recall: 0.5,
            f1: 2.0 / 3.0,
            accuracy: 1.0,
        };
        assert_eq!(
            m.report("seg"),
            "task = \"seg\"\nprecision = 1.0000\nrecall = 0.5000\nf1 = 0.6667\naccuracy = 1.0000\n"
        );
    }

    #[test]
    fn perfect_and_worst_scores() {
        let g = vec![vec!["B", "E", "S"]];
        assert_eq!(score_tagging(Scheme::Bmes, &g, &g).unwrap().primary(), 1.0);
        assert_eq!(score_classification(&[0, 1, 1], &[1, 0, 0]).unwrap().primary(), 0.0);
    }

    #[test]
    fn unknown_tag_reports_example_index() {
        let vocab = Vocab::build(["abc"], 1);
        let model = ZenModel::new(tiny(vocab.len()), 0).unwrap();
        let tm = TaskModel::new(model, vocab, None, seg_task(), 8, 0).unwrap();
        let data = TaskData::Tagging(vec![
            data::bmes_labels(&["ab"]),
            TaggingExample::new(vec!['c'], vec!["X".into()]).unwrap(),
        ]);
        match finetune(tm, &data, &data, &FinetuneConfig::default()) {
            Err(Error::UnknownLabel { index, label }) => assert_eq!((index, label.as_str()), (1, "X")),
            Err(e) => panic!("{e}"),
            Ok(_) => panic!("accepted unknown label"),
        }
    }

    #[test]
    fn separable_pair_task_is_learned() {
        let vocab = Vocab::build(["abcdefgh"], 1);
        let model = ZenModel::new(tiny(vocab.len()), 3).unwrap();
        let task = TaskSpec {
            name: "pair".into(),
            kind: TaskKind::Classification,
            labels: vec!["match".into(), "mismatch".into()],
        };
        let tm = TaskModel::new(model, vocab, None, task, 8, 3).unwrap();
        let exs: Vec<_> = ["ab", "cd", "efg", "h"]
            .iter()
            .map(|s| ClassificationExample {
                text_a: s.to_string(),
                text_b: Some(s.to_string()),
                label: 0,
            })
            .collect();
        let data = TaskData::Classification(exs);
        let cfg = FinetuneConfig {
            epochs: 3,
            peak_lr: 1e-2,
            ..Default::default()
        };
        let out = finetune(tm, &data, &data, &cfg).unwrap();
        assert_eq!(out.best().dev.primary(), 1.0);
        assert_eq!(out.model.evaluate(&data).unwrap().primary(), 1.0);
    }
}
