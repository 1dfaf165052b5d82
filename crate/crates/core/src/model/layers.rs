//! Transformer building blocks over a [`Graph`].

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::numerics::{truncated_normal, Graph, ParamId, ParamStore, Tensor, Var};

/// Seed for a named parameter, so that each tensor's initial values depend
/// only on the model seed and its name.
pub(crate) fn param_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub(crate) struct Init {
    pub seed: u64,
    pub std: f64,
    /// Zero-fill weights instead of sampling (for loading checkpoints).
    pub zeros: bool,
}

impl Init {
    pub fn weight(&self, store: &mut ParamStore, name: &str, shape: &[usize]) -> Result<ParamId> {
        let t = if self.zeros {
            Tensor::zeros(shape)
        } else {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(param_seed(self.seed, name));
            truncated_normal(&mut rng, shape, self.std)
        };
        store.add(name, t, true)
    }

    pub fn bias(&self, store: &mut ParamStore, name: &str, n: usize) -> Result<ParamId> {
        store.add(name, Tensor::zeros(&[n]), false)
    }

    pub fn linear(&self, store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Result<Linear> {
        Ok(Linear {
            weight: self.weight(store, &format!("{name}.weight"), &[fan_in, fan_out])?,
            bias: self.bias(store, &format!("{name}.bias"), fan_out)?,
        })
    }

    pub fn layer_norm(&self, store: &mut ParamStore, name: &str, n: usize) -> Result<LayerNorm> {
        Ok(LayerNorm {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[n], 1.0), false)?,
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[n]), false)?,
        })
    }
}

use rand::SeedableRng;

#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn forward(&self, g: &mut Graph, x: Var, eps: f64) -> Result<Var> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta, eps)
    }
}

/// Post-LN Transformer encoder layer.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub attn_ln: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub ffn_ln: LayerNorm,
}

pub struct LayerOutput {
    pub output: Var,
    /// Attention probabilities per head, each `rows × rows`.
    pub attention: Vec<Var>,
}

impl EncoderLayer {
    pub(crate) fn new(init: &Init, store: &mut ParamStore, prefix: &str, hidden: usize, ffn: usize) -> Result<Self> {
        Ok(Self {
            query: init.linear(store, &format!("{prefix}.attn.query"), hidden, hidden)?,
            key: init.linear(store, &format!("{prefix}.attn.key"), hidden, hidden)?,
            value: init.linear(store, &format!("{prefix}.attn.value"), hidden, hidden)?,
            attn_out: init.linear(store, &format!("{prefix}.attn.output"), hidden, hidden)?,
            attn_ln: init.layer_norm(store, &format!("{prefix}.attn_ln"), hidden)?,
            ffn_in: init.linear(store, &format!("{prefix}.ffn.in"), hidden, ffn)?,
            ffn_out: init.linear(store, &format!("{prefix}.ffn.out"), ffn, hidden)?,
            ffn_ln: init.layer_norm(store, &format!("{prefix}.ffn_ln"), hidden)?,
        })
    }

    /// `x` is `rows × hidden`; `key_bias`, when given, is a `rows × rows`
    /// additive score bias (used to hide padding keys).
    #[allow(clippy::too_many_arguments)]
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        x: Var,
        key_bias: Option<Var>,
        heads: usize,
        eps: f64,
        dropout: f64,
        rng: &mut R,
    ) -> Result<LayerOutput> {
        let hidden = g.shape(x)[1];
        let dh = hidden / heads;
        let q = self.query.forward(g, x)?;
        let k = self.key.forward(g, x)?;
        let v = self.value.forward(g, x)?;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut contexts = Vec::with_capacity(heads);
        let mut attention = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = g.slice_cols(q, h * dh, dh)?;
            let kh = g.slice_cols(k, h * dh, dh)?;
            let vh = g.slice_cols(v, h * dh, dh)?;
            let scores = g.matmul_t(qh, kh)?;
            let mut scores = g.scale(scores, scale);
            if let Some(b) = key_bias {
                scores = g.add(scores, b)?;
            }
            let probs = g.softmax(scores);
            attention.push(probs);
            let probs = g.dropout(probs, dropout, rng);
            contexts.push(g.matmul(probs, vh)?);
        }
        let ctx = g.concat_cols(&contexts)?;
        let attn = self.attn_out.forward(g, ctx)?;
        let attn = g.dropout(attn, dropout, rng);
        let res = g.add(x, attn)?;
        let h1 = self.attn_ln.forward(g, res, eps)?;

        let f = self.ffn_in.forward(g, h1)?;
        let f = g.gelu(f);
        let f = self.ffn_out.forward(g, f)?;
        let f = g.dropout(f, dropout, rng);
        let res = g.add(h1, f)?;
        let output = self.ffn_ln.forward(g, res, eps)?;
        Ok(LayerOutput { output, attention })
    }
}
