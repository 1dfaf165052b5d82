//! The n-gram enhanced encoder.
//!
//! A BERT-style character backbone runs alongside a Transformer over the
//! matched n-grams that carries no positional information. Before each
//! backbone layer, the representation of every n-gram occurrence is added to
//! the characters it covers, `V* = V + M·U`, where `M` is the instance's
//! matching matrix. The final backbone output is never fused; it feeds the
//! task heads unchanged, so heads see `k_c × hidden` states for any number of
//! n-grams.

pub mod checkpoint;
mod config;
pub mod heatmap;
mod layers;

pub use config::{FusionStep, ModelConfig};
pub use layers::{EncoderLayer, LayerNorm, Linear};

use rand::Rng;

use crate::corpus::PAD;
use crate::error::{Error, Result};
use crate::matcher::MatchState;
use crate::numerics::{Graph, ParamId, ParamStore, Tensor, Var, MASKED_SCORE};
use layers::Init;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active.
    Train,
    /// Dropout off; outputs are a pure function of inputs and parameters.
    Eval,
}

/// One encoder input. `ngrams: None` runs the backbone alone.
#[derive(Clone, Copy, Debug)]
pub struct EncoderInput<'a> {
    pub token_ids: &'a [usize],
    pub segment_ids: &'a [usize],
    pub ngrams: Option<&'a MatchState>,
}

pub struct ForwardOutput {
    /// Final character states, `k_c × hidden`.
    pub char_states: Var,
    /// Backbone layer inputs before fusion, one per backbone layer.
    pub layer_inputs: Vec<Var>,
    /// Backbone layer inputs after fusion (equal to `layer_inputs` when
    /// nothing was fused).
    pub fused_inputs: Vec<Var>,
    /// N-gram representations: embeddings followed by each n-gram layer's
    /// output (`k_n × hidden` each). Empty for backbone-only runs.
    pub ngram_states: Vec<Var>,
    /// Per n-gram layer, per head attention probabilities (`k_n × k_n`).
    pub ngram_attention: Vec<Vec<Var>>,
}

#[derive(Clone, Debug)]
pub(crate) struct ModelIds {
    pub token_emb: ParamId,
    pub position_emb: ParamId,
    pub segment_emb: ParamId,
    pub emb_ln: LayerNorm,
    pub ngram_emb: ParamId,
    pub ngram_emb_ln: LayerNorm,
    pub char_layers: Vec<EncoderLayer>,
    pub ngram_layers: Vec<EncoderLayer>,
    pub mlm_dense: Linear,
    pub mlm_ln: LayerNorm,
    pub mlm_bias: ParamId,
    pub pooler: Linear,
    pub nsp: Linear,
}

#[derive(Clone, Debug)]
pub struct ZenModel {
    config: ModelConfig,
    params: ParamStore,
    ids: ModelIds,
}

impl ZenModel {
    /// Randomly initialized model: truncated normal (σ = `init_std`) weights
    /// and embeddings, zero biases, unit layer-norm gains. Each tensor is
    /// seeded from `seed` and its own name.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::build(config, seed, false)
    }

    /// Model with all weights zeroed, to be filled from a checkpoint.
    pub(crate) fn skeleton(config: ModelConfig) -> Result<Self> {
        Self::build(config, 0, true)
    }

    fn build(config: ModelConfig, seed: u64, zeros: bool) -> Result<Self> {
        config.validate()?;
        let init = Init {
            seed,
            std: config.init_std,
            zeros,
        };
        let d = config.hidden;
        let mut p = ParamStore::new();
        let token_emb = init.weight(&mut p, "embeddings.token", &[config.vocab_size, d])?;
        let position_emb = init.weight(&mut p, "embeddings.position", &[config.max_len, d])?;
        let segment_emb = init.weight(&mut p, "embeddings.segment", &[config.type_vocab, d])?;
        let emb_ln = init.layer_norm(&mut p, "embeddings.ln", d)?;
        let char_layers = (0..config.char_layers)
            .map(|l| EncoderLayer::new(&init, &mut p, &format!("encoder.layer{l}"), d, config.ffn))
            .collect::<Result<Vec<_>>>()?;
        let ngram_emb = init.weight(&mut p, "ngram_embeddings.table", &[config.lexicon_size, d])?;
        let ngram_emb_ln = init.layer_norm(&mut p, "ngram_embeddings.ln", d)?;
        let ngram_layers = (0..config.ngram_layers)
            .map(|t| EncoderLayer::new(&init, &mut p, &format!("ngram_encoder.layer{t}"), d, config.ffn))
            .collect::<Result<Vec<_>>>()?;
        let mlm_dense = init.linear(&mut p, "mlm.dense", d, d)?;
        let mlm_ln = init.layer_norm(&mut p, "mlm.ln", d)?;
        let mlm_bias = init.bias(&mut p, "mlm.output_bias", config.vocab_size)?;
        let pooler = init.linear(&mut p, "pooler.dense", d, d)?;
        let nsp = init.linear(&mut p, "nsp.classifier", d, 2)?;
        Ok(Self {
            config,
            params: p,
            ids: ModelIds {
                token_emb,
                position_emb,
                segment_emb,
                emb_ln,
                ngram_emb,
                ngram_emb_ln,
                char_layers,
                ngram_layers,
                mlm_dense,
                mlm_ln,
                mlm_bias,
                pooler,
                nsp,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn ngram_embedding_id(&self) -> ParamId {
        self.ids.ngram_emb
    }

    pub fn token_embedding_id(&self) -> ParamId {
        self.ids.token_emb
    }

    /// Add a randomly initialized task-head linear layer to the parameter
    /// store (used by fine-tuning).
    pub fn add_linear(&mut self, name: &str, fan_in: usize, fan_out: usize, seed: u64) -> Result<Linear> {
        let init = Init {
            seed,
            std: self.config.init_std,
            zeros: false,
        };
        init.linear(&mut self.params, name, fan_in, fan_out)
    }

    fn check_input(&self, input: &EncoderInput) -> Result<()> {
        let kc = input.token_ids.len();
        if kc == 0 || kc > self.config.max_len {
            return Err(Error::invalid(format!(
                "instance length {kc} outside [1, {}]",
                self.config.max_len
            )));
        }
        if input.segment_ids.len() != kc {
            return Err(Error::invalid(format!(
                "segment ids length {} does not match {kc} tokens",
                input.segment_ids.len()
            )));
        }
        if let Some(&t) = input.token_ids.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::invalid(format!("token id {t} out of vocabulary")));
        }
        if let Some(&s) = input.segment_ids.iter().find(|&&s| s >= self.config.type_vocab) {
            return Err(Error::invalid(format!("segment id {s} out of range")));
        }
        if let Some(m) = input.ngrams {
            if m.num_chars() != kc {
                return Err(Error::invalid(format!(
                    "matching matrix has {} rows for {kc} characters",
                    m.num_chars()
                )));
            }
            if let Some(o) = m.occurrences().iter().find(|o| o.ngram_id >= self.config.lexicon_size) {
                return Err(Error::invalid(format!(
                    "n-gram id {} outside lexicon of {}",
                    o.ngram_id, self.config.lexicon_size
                )));
            }
        }
        Ok(())
    }

    /// Run the encoder. Parameters are read from `g`'s store, which must be
    /// this model's store (or a same-layout copy).
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        input: &EncoderInput,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        self.check_input(input)?;
        let cfg = &self.config;
        let eps = cfg.layer_norm_eps;
        let dropout = match mode {
            Mode::Train => cfg.dropout,
            Mode::Eval => 0.0,
        };
        let kc = input.token_ids.len();

        let tok_table = g.param(self.ids.token_emb);
        let pos_table = g.param(self.ids.position_emb);
        let seg_table = g.param(self.ids.segment_emb);
        let tok = g.gather(tok_table, input.token_ids)?;
        let positions: Vec<usize> = (0..kc).collect();
        let pos = g.gather(pos_table, &positions)?;
        let seg = g.gather(seg_table, input.segment_ids)?;
        let e = g.add(tok, pos)?;
        let e = g.add(e, seg)?;
        let e = self.ids.emb_ln.forward(g, e, eps)?;
        let mut hidden = g.dropout(e, dropout, rng);

        let key_bias = if input.token_ids.contains(&PAD) {
            let mut bias = Tensor::zeros(&[kc, kc]);
            for (j, &t) in input.token_ids.iter().enumerate() {
                if t == PAD {
                    for i in 0..kc {
                        bias.data_mut()[i * kc + j] = MASKED_SCORE;
                    }
                }
            }
            Some(g.constant(bias))
        } else {
            None
        };

        // N-gram stream: embeddings only, no positions or segments.
        let mut ngram_states = Vec::new();
        let mut ngram_attention = Vec::new();
        let mut matrix = None;
        if let Some(m) = input.ngrams {
            let table = g.param(self.ids.ngram_emb);
            let u = g.gather(table, &m.ngram_ids())?;
            let u = self.ids.ngram_emb_ln.forward(g, u, eps)?;
            let u = g.dropout(u, dropout, rng);
            ngram_states.push(u);
            if m.num_ngrams() > 0 {
                matrix = Some(g.constant(m.matrix()));
            }
        }

        let mut layer_inputs = Vec::with_capacity(cfg.char_layers);
        let mut fused_inputs = Vec::with_capacity(cfg.char_layers);
        for step in cfg.fusion_schedule() {
            layer_inputs.push(hidden);
            if input.ngrams.is_some() {
                if step.advance {
                    let u = *ngram_states.last().expect("embeddings pushed");
                    let out = self.ids.ngram_layers[step.ngram_layer].forward(g, u, None, cfg.heads, eps, dropout, rng)?;
                    ngram_states.push(out.output);
                    ngram_attention.push(out.attention);
                }
                if let Some(m) = matrix {
                    let u = ngram_states[step.ngram_layer + 1];
                    hidden = fuse(g, hidden, u, m)?;
                }
            }
            fused_inputs.push(hidden);
            let out = self.ids.char_layers[step.backbone_layer].forward(g, hidden, key_bias, cfg.heads, eps, dropout, rng)?;
            hidden = out.output;
        }

        Ok(ForwardOutput {
            char_states: hidden,
            layer_inputs,
            fused_inputs,
            ngram_states,
            ngram_attention,
        })
    }

    /// MLM logits (`positions × vocab`); the output projection is tied to the
    /// token embedding table.
    pub fn mlm_logits(&self, g: &mut Graph, states: Var, positions: &[usize]) -> Result<Var> {
        let rows = g.gather(states, positions)?;
        let h = self.ids.mlm_dense.forward(g, rows)?;
        let h = g.gelu(h);
        let h = self.ids.mlm_ln.forward(g, h, self.config.layer_norm_eps)?;
        let table = g.param(self.ids.token_emb);
        let logits = g.matmul_t(h, table)?;
        let bias = g.param(self.ids.mlm_bias);
        g.add_row(logits, bias)
    }

    /// Mean cross-entropy over masked positions.
    pub fn mlm_loss(&self, g: &mut Graph, states: Var, positions: &[usize], labels: &[usize]) -> Result<(Var, Var)> {
        if positions.is_empty() {
            return Err(Error::invalid("MLM loss needs at least one masked position"));
        }
        let logits = self.mlm_logits(g, states, positions)?;
        Ok((g.cross_entropy(logits, labels)?, logits))
    }

    /// `tanh(W·h_CLS + b)`, `1 × hidden`.
    pub fn pooled(&self, g: &mut Graph, states: Var) -> Result<Var> {
        let cls = g.gather(states, &[0])?;
        let p = self.ids.pooler.forward(g, cls)?;
        Ok(g.tanh(p))
    }

    /// Two-way next-sentence logits; class 0 means "is next".
    pub fn nsp_logits(&self, g: &mut Graph, states: Var) -> Result<Var> {
        let pooled = self.pooled(g, states)?;
        self.ids.nsp.forward(g, pooled)
    }

    pub fn nsp_loss(&self, g: &mut Graph, states: Var, label: usize) -> Result<(Var, Var)> {
        let logits = self.nsp_logits(g, states)?;
        Ok((g.cross_entropy(logits, &[label])?, logits))
    }
}

/// `V + M·U`. With no n-grams (`k_n = 0`) this is the identity on `V`.
pub fn fuse(g: &mut Graph, v: Var, u: Var, m: Var) -> Result<Var> {
    let (kc, kn) = (g.shape(m)[0], g.shape(m)[1]);
    if g.shape(v)[0] != kc || g.shape(u)[0] != kn {
        return Err(Error::Shape {
            op: "fuse",
            lhs: g.shape(v).to_vec(),
            rhs: g.shape(m).to_vec(),
        });
    }
    if kn == 0 {
        return Ok(v);
    }
    let mu = g.matmul(m, u)?;
    g.add(v, mu)
}

/// Row `i` of the result is the argmax of row `i` of `logits`.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|r| {
            let row = t.row(r);
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
