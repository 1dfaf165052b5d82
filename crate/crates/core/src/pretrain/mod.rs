//! Masked-language-model plus next-sentence pretraining.
//!
//! The loop per step: draw a batch from the [`InstanceStream`], match n-grams
//! on the unmasked characters, drop occurrences that cover a masked
//! position, run the encoder, sum MLM and NSP losses, backpropagate and take
//! an AdamW step. All randomness is keyed by `(seed, purpose, index)`, so a
//! resumed run reproduces an uninterrupted one exactly.

mod data;
mod optim;
pub mod synthetic;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use data::{InstanceStream, PairSource};
pub use optim::{learning_rate, AdamW};

use crate::corpus::{Corpus, PretrainInstance, Vocab};
use crate::error::{Error, Result};
use crate::lexicon::NgramLexicon;
use crate::matcher::{MatchState, Matcher};
use crate::model::checkpoint::{self, AUX_PREFIX, NO_LEXICON};
use crate::model::{argmax_rows, EncoderInput, Mode, ZenModel};
use crate::numerics::{Gradients, Graph, Var};
use crate::seeds::rng_for;

pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_HEADER: &str = "step,total_loss,mlm_loss,nsp_loss,mlm_acc,lr";
pub const FINAL_CHECKPOINT: &str = "final";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub peak_lr: f64,
    pub warmup_frac: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub mask_rate: f64,
    pub max_ngrams: usize,
    /// Write a metrics row every this many steps.
    pub log_every: usize,
    /// Save `checkpoint-{step}` every this many steps; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            steps: 1000,
            peak_lr: 1e-4,
            warmup_frac: 0.1,
            weight_decay: 0.01,
            seed: 0,
            mask_rate: 0.15,
            max_ngrams: crate::matcher::DEFAULT_MAX_NGRAMS,
            log_every: 1,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("steps", self.steps),
            ("log_every", self.log_every),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
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
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(Error::invalid("mask_rate must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Loss nodes for one instance.
#[derive(Clone, Copy, Debug)]
pub struct InstanceLoss {
    /// `mlm + nsp`.
    pub total: Var,
    pub mlm: Var,
    pub nsp: Var,
    pub mlm_logits: Var,
    pub nsp_logits: Var,
}

/// N-gram matches for a pretraining instance with masked-covering
/// occurrences removed. `None` without a matcher.
pub fn instance_ngrams(matcher: Option<&Matcher>, inst: &PretrainInstance, max_ngrams: usize) -> Option<MatchState> {
    matcher.map(|m| m.find(&inst.chars, max_ngrams).exclude_masked(&inst.mask_positions))
}

/// Build the MLM + NSP objective for one instance on `g`.
pub fn pretrain_objective<R: rand::Rng + ?Sized>(
    model: &ZenModel,
    g: &mut Graph,
    inst: &PretrainInstance,
    ngrams: Option<&MatchState>,
    mode: Mode,
    rng: &mut R,
) -> Result<InstanceLoss> {
    let input = EncoderInput {
        token_ids: &inst.token_ids,
        segment_ids: &inst.segment_ids,
        ngrams,
    };
    let out = model.forward(g, &input, mode, rng)?;
    let (mlm, mlm_logits) = model.mlm_loss(g, out.char_states, &inst.mask_positions, &inst.mlm_labels)?;
    let (nsp, nsp_logits) = model.nsp_loss(g, out.char_states, inst.nsp_label())?;
    let total = g.add(mlm, nsp)?;
    Ok(InstanceLoss {
        total,
        mlm,
        nsp,
        mlm_logits,
        nsp_logits,
    })
}

/// Metrics for one optimizer step, averaged over the batch. `step` counts
/// completed steps (the first row is step 1).
#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub total_loss: f64,
    pub mlm_loss: f64,
    pub nsp_loss: f64,
    pub mlm_acc: f64,
    pub lr: f64,
}

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.8},{:.8},{:.8},{:.6},{:.8e}",
            self.step, self.total_loss, self.mlm_loss, self.nsp_loss, self.mlm_acc, self.lr
        )
    }
}

/// Masked-token accuracy and mean MLM loss in evaluation mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MlmEval {
    pub accuracy: f64,
    pub loss: f64,
}

pub fn evaluate_mlm(
    model: &ZenModel,
    lexicon: Option<&NgramLexicon>,
    instances: &[PretrainInstance],
    max_ngrams: usize,
) -> Result<MlmEval> {
    let matcher = lexicon.map(Matcher::new);
    let mut rng = rng_for(0, "eval", 0);
    let (mut correct, mut total, mut loss) = (0usize, 0usize, 0.0);
    for inst in instances {
        let ngrams = instance_ngrams(matcher.as_ref(), inst, max_ngrams);
        let mut g = Graph::new(model.params());
        let l = pretrain_objective(model, &mut g, inst, ngrams.as_ref(), Mode::Eval, &mut rng)?;
        let pred = argmax_rows(g.value(l.mlm_logits));
        correct += pred.iter().zip(&inst.mlm_labels).filter(|(p, t)| p == t).count();
        total += inst.mlm_labels.len();
        loss += g.value(l.mlm).item();
    }
    if instances.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    Ok(MlmEval {
        accuracy: correct as f64 / total.max(1) as f64,
        loss: loss / instances.len() as f64,
    })
}

/// Stateful pretraining loop.
pub struct Trainer {
    model: ZenModel,
    lexicon: Option<NgramLexicon>,
    lexicon_hash: String,
    stream: InstanceStream,
    config: TrainConfig,
    optim: AdamW,
    step: usize,
}

impl Trainer {
    /// `lexicon = None` runs the backbone alone (the zero-lexicon baseline).
    pub fn new(
        model: ZenModel,
        lexicon: Option<NgramLexicon>,
        corpus: &Corpus,
        vocab: Vocab,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if model.config().vocab_size != vocab.len() {
            return Err(Error::invalid(format!(
                "model vocab_size {} does not match vocabulary of {}",
                model.config().vocab_size,
                vocab.len()
            )));
        }
        if let Some(lex) = &lexicon {
            if model.config().lexicon_size != lex.len() {
                return Err(Error::invalid(format!(
                    "model lexicon_size {} does not match lexicon of {}",
                    model.config().lexicon_size,
                    lex.len()
                )));
            }
        }
        let lexicon_hash = lexicon.as_ref().map_or_else(|| NO_LEXICON.to_string(), NgramLexicon::content_hash);
        let stream = InstanceStream::new(corpus, vocab, config.seed, config.mask_rate, model.config().max_len)?;
        let optim = AdamW::new(config.weight_decay);
        Ok(Self {
            model,
            lexicon,
            lexicon_hash,
            stream,
            config,
            optim,
            step: 0,
        })
    }

    /// Continue from a checkpoint written by [`Trainer::save_checkpoint`].
    pub fn resume(
        dir: &Path,
        lexicon: Option<NgramLexicon>,
        corpus: &Corpus,
        vocab: Vocab,
        config: TrainConfig,
    ) -> Result<Self> {
        let ckpt = checkpoint::load(dir)?;
        let hash = lexicon.as_ref().map_or_else(|| NO_LEXICON.to_string(), NgramLexicon::content_hash);
        ckpt.require_lexicon(&hash)?;
        let mut t = Self::new(ckpt.model, lexicon, corpus, vocab, config)?;
        t.optim.load_state(t.model.params(), AUX_PREFIX, &ckpt.aux)?;
        t.step = ckpt.meta.step;
        Ok(t)
    }

    pub fn model(&self) -> &ZenModel {
        &self.model
    }

    pub fn into_model(self) -> ZenModel {
        self.model
    }

    pub fn lexicon(&self) -> Option<&NgramLexicon> {
        self.lexicon.as_ref()
    }

    pub fn lexicon_hash(&self) -> &str {
        &self.lexicon_hash
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn vocab(&self) -> &Vocab {
        self.stream.vocab()
    }

    /// One optimizer step. Fails with [`Error::NonFinite`] before touching
    /// the parameters if any loss or gradient is not finite.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let cfg = &self.config;
        let batch = self.stream.batch(self.step, cfg.batch_size)?;
        let matcher = self.lexicon.as_ref().map(Matcher::new);
        let mut grads = Gradients::new(self.model.params().len());
        let scale = 1.0 / batch.len() as f64;
        let (mut total, mut mlm, mut nsp) = (0.0, 0.0, 0.0);
        let (mut correct, mut masked) = (0usize, 0usize);
        for (i, inst) in batch.iter().enumerate() {
            let ngrams = instance_ngrams(matcher.as_ref(), inst, cfg.max_ngrams);
            let mut rng = rng_for(cfg.seed, "dropout", (self.step * cfg.batch_size + i) as u64);
            let mut g = Graph::new(self.model.params());
            let l = pretrain_objective(&self.model, &mut g, inst, ngrams.as_ref(), Mode::Train, &mut rng)?;
            total += g.value(l.total).item() * scale;
            mlm += g.value(l.mlm).item() * scale;
            nsp += g.value(l.nsp).item() * scale;
            let pred = argmax_rows(g.value(l.mlm_logits));
            correct += pred.iter().zip(&inst.mlm_labels).filter(|(p, t)| p == t).count();
            masked += inst.mlm_labels.len();
            grads.add_scaled(&g.backward(l.total)?, scale);
        }
        let step_no = self.step + 1;
        if !total.is_finite() || !grads.l2_norm().is_finite() {
            return Err(Error::NonFinite { step: step_no });
        }
        let lr = learning_rate(self.step, cfg.steps, cfg.peak_lr, cfg.warmup_frac);
        self.optim.step(self.model.params_mut(), &grads, lr);
        self.step = step_no;
        Ok(StepMetrics {
            step: step_no,
            total_loss: total,
            mlm_loss: mlm,
            nsp_loss: nsp,
            mlm_acc: correct as f64 / masked.max(1) as f64,
            lr,
        })
    }

    /// Write the model, optimizer state and step count to `dir`.
    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        let aux = self.optim.state_tensors(self.model.params(), AUX_PREFIX);
        checkpoint::save(dir, &self.model, &self.lexicon_hash, self.step, None, &aux)
    }

    /// Train until `config.steps`. With an output directory, metrics go to
    /// `metrics.csv` (rows past the resume point are discarded first),
    /// periodic checkpoints to `checkpoint-{step}` and the last state to
    /// `final`. Returns the metrics of the steps run by this call.
    pub fn run(&mut self, out_dir: Option<&Path>) -> Result<Vec<StepMetrics>> {
        let mut log = match out_dir {
            Some(dir) => Some(MetricsLog::open(dir, self.step)?),
            None => None,
        };
        let mut history = Vec::new();
        while self.step < self.config.steps {
            let m = self.step()?;
            if let Some(log) = &mut log {
                if m.step % self.config.log_every == 0 || m.step == self.config.steps {
                    log.append(&m)?;
                }
            }
            log::debug!("step {} loss {:.6} lr {:.3e}", m.step, m.total_loss, m.lr);
            if let Some(dir) = out_dir {
                let k = self.config.checkpoint_every;
                if k > 0 && m.step % k == 0 {
                    self.save_checkpoint(&dir.join(format!("checkpoint-{}", m.step)))?;
                }
            }
            history.push(m);
        }
        if let Some(dir) = out_dir {
            self.save_checkpoint(&dir.join(FINAL_CHECKPOINT))?;
        }
        Ok(history)
    }
}

struct MetricsLog {
    path: PathBuf,
}

impl MetricsLog {
    fn open(dir: &Path, resume_step: usize) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(METRICS_FILE);
        let mut text = format!("{METRICS_HEADER}\n");
        if resume_step > 0 {
            if let Ok(old) = fs::read_to_string(&path) {
                for line in old.lines().skip(1) {
                    let step: usize = line.split(',').next().and_then(|s| s.parse().ok()).unwrap_or(usize::MAX);
                    if step <= resume_step {
                        text.push_str(line);
                        text.push('\n');
                    }
                }
            }
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(Self { path })
    }

    fn append(&mut self, m: &StepMetrics) -> Result<()> {
        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        writeln!(f, "{}", m.csv_row()).map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny(vocab: usize, lexicon: usize) -> ModelConfig {
        ModelConfig {
            char_layers: 1,
            ngram_layers: 1,
            hidden: 16,
            heads: 2,
            ffn: 32,
            max_len: 32,
            vocab_size: vocab,
            lexicon_size: lexicon,
            dropout: 0.0,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            warmup_frac: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_mask_loss_is_that_cross_entropy() {
        let corpus = Corpus::parse("abcdef\nghijk\n");
        let vocab = Vocab::build(corpus.sentences(), 1);
        let model = ZenModel::new(tiny(vocab.len(), 0), 1).unwrap();
        let mut rng = rng_for(0, "t", 0);
        let mut inst = crate::corpus::make_instance("abc", "de", true, &vocab, 0.01, 32, &mut rng).unwrap();
        assert_eq!(inst.mask_positions.len(), 1);
        inst.is_next = true;
        let mut g = Graph::new(model.params());
        let l = pretrain_objective(&model, &mut g, &inst, None, Mode::Eval, &mut rng).unwrap();
        let logits = g.value(l.mlm_logits).row(0).to_vec();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let expected = lse - logits[inst.mlm_labels[0]];
        assert!((g.value(l.mlm).item() - expected).abs() < 1e-12);
    }

    #[test]
    fn untrained_nsp_loss_near_ln2() {
        let corpus = synthetic::generate(&synthetic::PhraseCorpusConfig {
            sentences: 200,
            ..Default::default()
        })
        .unwrap()
        .corpus;
        let vocab = Vocab::build(corpus.sentences(), 1);
        let model = ZenModel::new(tiny(vocab.len(), 0), 4).unwrap();
        let mut stream = InstanceStream::new(&corpus, vocab, 4, 0.15, 32).unwrap();
        let batch = stream.batch(0, 64).unwrap();
        let mut rng = rng_for(0, "t", 0);
        let mut sum = 0.0;
        for inst in &batch {
            let mut g = Graph::new(model.params());
            let l = pretrain_objective(&model, &mut g, inst, None, Mode::Eval, &mut rng).unwrap();
            sum += g.value(l.nsp).item();
        }
        let mean = sum / batch.len() as f64;
        assert!((mean - 2f64.ln()).abs() < 0.1, "{mean}");
    }

    #[test]
    fn overfits_one_sentence() {
        let corpus = Corpus::parse("abcdefgh\n");
        let vocab = Vocab::build(corpus.sentences(), 1);
        let mut cfg = tiny(vocab.len(), 0);
        cfg.hidden = 32;
        cfg.ffn = 64;
        let model = ZenModel::new(cfg, 2).unwrap();
        let tc = TrainConfig {
            batch_size: 4,
            steps: 200,
            peak_lr: 5e-3,
            seed: 2,
            ..Default::default()
        };
        let mut t = Trainer::new(model, None, &corpus, vocab, tc).unwrap();
        let hist = t.run(None).unwrap();
        let tail: f64 = hist[190..].iter().map(|m| m.mlm_loss).sum::<f64>() / 10.0;
        assert!(tail < 0.1, "final mlm loss {tail}");
    }

    #[test]
    fn metrics_log_truncates_on_resume() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(METRICS_FILE),
            format!("{METRICS_HEADER}\n1,a\n2,b\n3,c\n"),
        )
        .unwrap();
        MetricsLog::open(dir.path(), 2).unwrap();
        let text = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(text, format!("{METRICS_HEADER}\n1,a\n2,b\n"));
    }
}
