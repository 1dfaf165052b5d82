//! Generated phrase corpus.
//!
//! A fixed inventory of distinct multi-character "phrases" is drawn over a
//! small alphabet of CJK characters; every sentence is a concatenation of
//! uniformly sampled phrases and documents group consecutive sentences. The
//! true phrase inventory is the ideal n-gram lexicon for such text.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_mlm, InstanceStream, TrainConfig, Trainer};
use crate::corpus::{Corpus, Vocab};
use crate::error::{Error, Result};
use crate::lexicon::{count_ngrams, LexiconEntry, NgramLexicon};
use crate::model::{ModelConfig, ZenModel};
use crate::seeds::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhraseCorpusConfig {
    pub alphabet_size: usize,
    pub inventory: usize,
    pub min_phrase_len: usize,
    pub max_phrase_len: usize,
    pub sentences: usize,
    pub min_phrases_per_sentence: usize,
    pub max_phrases_per_sentence: usize,
    pub sentences_per_document: usize,
    pub seed: u64,
}

impl Default for PhraseCorpusConfig {
    fn default() -> Self {
        Self {
            alphabet_size: 1000,
            inventory: 200,
            min_phrase_len: 2,
            max_phrase_len: 4,
            sentences: 5000,
            min_phrases_per_sentence: 3,
            max_phrases_per_sentence: 6,
            sentences_per_document: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PhraseCorpus {
    pub alphabet: Vec<char>,
    pub phrases: Vec<String>,
    pub corpus: Corpus,
}

/// Alphabet character `i`: consecutive CJK unified ideographs from U+4E00.
pub fn alphabet_char(i: usize) -> char {
    char::from_u32(0x4E00 + i as u32).expect("CJK block")
}

pub fn generate(cfg: &PhraseCorpusConfig) -> Result<PhraseCorpus> {
    if cfg.min_phrase_len < 2 || cfg.max_phrase_len < cfg.min_phrase_len {
        return Err(Error::invalid("phrase lengths must satisfy 2 <= min <= max"));
    }
    if cfg.min_phrases_per_sentence == 0 || cfg.max_phrases_per_sentence < cfg.min_phrases_per_sentence {
        return Err(Error::invalid("phrases per sentence must satisfy 1 <= min <= max"));
    }
    let possible = (cfg.min_phrase_len..=cfg.max_phrase_len)
        .map(|n| (cfg.alphabet_size as f64).powi(n as i32))
        .sum::<f64>();
    if (cfg.inventory as f64) > possible / 2.0 {
        return Err(Error::invalid("alphabet too small for the requested inventory"));
    }
    let alphabet: Vec<char> = (0..cfg.alphabet_size).map(alphabet_char).collect();
    let mut rng = rng_for(cfg.seed, "phrases", 0);
    let mut seen = HashSet::new();
    let mut phrases = Vec::with_capacity(cfg.inventory);
    while phrases.len() < cfg.inventory {
        let n = rng.gen_range(cfg.min_phrase_len..=cfg.max_phrase_len);
        let p: String = (0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect();
        if seen.insert(p.clone()) {
            phrases.push(p);
        }
    }
    let mut rng = rng_for(cfg.seed, "sentences", 0);
    let mut documents = Vec::new();
    let mut doc = Vec::new();
    for _ in 0..cfg.sentences {
        let k = rng.gen_range(cfg.min_phrases_per_sentence..=cfg.max_phrases_per_sentence);
        let s: String = (0..k).map(|_| phrases[rng.gen_range(0..phrases.len())].as_str()).collect();
        doc.push(s);
        if doc.len() == cfg.sentences_per_document.max(1) {
            documents.push(std::mem::take(&mut doc));
        }
    }
    if !doc.is_empty() {
        documents.push(doc);
    }
    Ok(PhraseCorpus {
        alphabet,
        phrases,
        corpus: Corpus { documents },
    })
}

impl PhraseCorpus {
    /// The phrase inventory as a lexicon, with corpus occurrence counts
    /// (phrases that never occur are dropped).
    pub fn true_lexicon(&self) -> Result<NgramLexicon> {
        let min = self.phrases.iter().map(|p| p.chars().count()).min().unwrap_or(2);
        let max = self.phrases.iter().map(|p| p.chars().count()).max().unwrap_or(2);
        let counts = count_ngrams(self.corpus.sentences(), min, max);
        let mut entries: Vec<LexiconEntry> = self
            .phrases
            .iter()
            .filter_map(|p| counts.get(p).map(|&freq| LexiconEntry { ngram: p.clone(), freq }))
            .collect();
        entries.sort_by(|a, b| b.freq.cmp(&a.freq).then_with(|| a.ngram.cmp(&b.ngram)));
        NgramLexicon::from_entries(entries, min, max, 1)
    }

    /// Corpus file text: one sentence per line, blank line between documents.
    pub fn text(&self) -> String {
        let mut s = String::new();
        for doc in &self.corpus.documents {
            for line in doc {
                s.push_str(line);
                s.push('\n');
            }
            s.push('\n');
        }
        s
    }
}

/// Settings for a steps-to-target comparison on a phrase corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceConfig {
    /// Model shape; `vocab_size` and `lexicon_size` are filled in.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval_every: usize,
    pub eval_instances: usize,
    pub target_accuracy: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                char_layers: 2,
                ngram_layers: 1,
                hidden: 64,
                heads: 2,
                ffn: 128,
                max_len: 64,
                dropout: 0.0,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                batch_size: 16,
                steps: 4000,
                peak_lr: 2e-3,
                ..TrainConfig::default()
            },
            eval_every: 50,
            eval_instances: 200,
            target_accuracy: 0.6,
        }
    }
}

/// Held-out accuracy trace of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRun {
    /// `(step, masked-token accuracy)` at every evaluation.
    pub trace: Vec<(usize, f64)>,
    /// First evaluated step at which the target was reached.
    pub steps_to_target: Option<usize>,
}

/// Train from scratch (model and data seeded by `cfg.train.seed`) and
/// evaluate masked-token accuracy on instances drawn from a separately
/// seeded stream until the target is reached or the step budget runs out.
/// Both arms of a comparison see identical data, initialisation of shared
/// parameters and evaluation sets; only the lexicon differs.
pub fn steps_to_accuracy(
    corpus: &Corpus,
    lexicon: Option<&NgramLexicon>,
    lexicon_size: usize,
    cfg: &ConvergenceConfig,
) -> Result<ConvergenceRun> {
    let vocab = Vocab::build(corpus.sentences(), 1);
    let model_cfg = ModelConfig {
        vocab_size: vocab.len(),
        lexicon_size,
        ..cfg.model.clone()
    };
    let seed = cfg.train.seed;
    let held_out = InstanceStream::new(
        corpus,
        vocab.clone(),
        seed ^ 0x5eed_e7a1,
        cfg.train.mask_rate,
        model_cfg.max_len,
    )?
    .epoch(0)?;
    let held_out = &held_out[..cfg.eval_instances.min(held_out.len())];
    let model = ZenModel::new(model_cfg, seed)?;
    let mut trainer = Trainer::new(model, lexicon.cloned(), corpus, vocab, cfg.train.clone())?;
    let mut trace = Vec::new();
    while trainer.steps_done() < cfg.train.steps {
        for _ in 0..cfg.eval_every.max(1) {
            if trainer.steps_done() == cfg.train.steps {
                break;
            }
            trainer.step()?;
        }
        let acc = evaluate_mlm(trainer.model(), lexicon, held_out, cfg.train.max_ngrams)?.accuracy;
        trace.push((trainer.steps_done(), acc));
        log::info!("step {} held-out accuracy {:.4}", trainer.steps_done(), acc);
        if acc >= cfg.target_accuracy {
            return Ok(ConvergenceRun {
                trace,
                steps_to_target: Some(trainer.steps_done()),
            });
        }
    }
    Ok(ConvergenceRun {
        trace,
        steps_to_target: None,
    })
}

/// Sentences as explicit phrase sequences, for building segmentation data.
pub fn phrase_sentences<R: Rng + ?Sized>(
    phrases: &[String],
    count: usize,
    min_words: usize,
    max_words: usize,
    rng: &mut R,
) -> Vec<Vec<String>> {
    (0..count)
        .map(|_| {
            let k = rng.gen_range(min_words..=max_words);
            (0..k).map(|_| phrases[rng.gen_range(0..phrases.len())].clone()).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generates_requested_shape() {
        let cfg = PhraseCorpusConfig {
            sentences: 100,
            ..Default::default()
        };
        let pc = generate(&cfg).unwrap();
        assert_eq!(pc.phrases.len(), 200);
        assert!(pc.phrases.iter().all(|p| (2..=4).contains(&p.chars().count())));
        assert_eq!(pc.corpus.num_sentences(), 100);
        assert_eq!(pc.corpus.documents.len(), 20);
        let lex = pc.true_lexicon().unwrap();
        assert!(lex.len() <= 200 && lex.len() > 100);
        // Deterministic.
        assert_eq!(generate(&cfg).unwrap().phrases, pc.phrases);
    }

    #[test]
    fn text_round_trips_through_corpus_parser() {
        let pc = generate(&PhraseCorpusConfig {
            sentences: 12,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(Corpus::parse(&pc.text()), pc.corpus);
    }
}
