use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Character backbone layers.
    pub char_layers: usize,
    /// N-gram encoder layers; at most `char_layers`.
    pub ngram_layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub lexicon_size: usize,
    pub type_vocab: usize,
    pub dropout: f64,
    pub layer_norm_eps: f64,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            char_layers: 4,
            ngram_layers: 2,
            hidden: 64,
            heads: 4,
            ffn: 256,
            max_len: 128,
            vocab_size: 0,
            lexicon_size: 0,
            type_vocab: 2,
            dropout: 0.1,
            layer_norm_eps: 1e-12,
            init_std: 0.02,
        }
    }
}

/// What happens at one backbone layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FusionStep {
    pub backbone_layer: usize,
    /// N-gram layer whose output is fused into this backbone layer's input.
    pub ngram_layer: usize,
    /// True at the first backbone layer mapped to `ngram_layer`, where the
    /// n-gram encoder advances.
    pub advance: bool,
}

impl ModelConfig {
    /// BERT-base-sized backbone with a six-layer n-gram encoder.
    pub fn paper_scale(vocab_size: usize, lexicon_size: usize) -> Self {
        Self {
            char_layers: 12,
            ngram_layers: 6,
            hidden: 768,
            heads: 12,
            ffn: 3072,
            max_len: 512,
            vocab_size,
            lexicon_size,
            ..Self::default()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("char_layers", self.char_layers),
            ("ngram_layers", self.ngram_layers),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("ffn", self.ffn),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
            ("type_vocab", self.type_vocab),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("model.{name} must be positive")));
            }
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::invalid(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if self.ngram_layers > self.char_layers {
            return Err(Error::invalid("ngram_layers must not exceed char_layers"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must be in [0, 1)"));
        }
        if self.layer_norm_eps <= 0.0 || self.init_std <= 0.0 {
            return Err(Error::invalid("layer_norm_eps and init_std must be positive"));
        }
        Ok(())
    }

    /// N-gram layer `t` serves backbone layers `l` with
    /// `floor(l * ngram_layers / char_layers) == t`. Its output is fused into
    /// the input of each of those layers; nothing is fused into the final
    /// backbone output.
    pub fn fusion_schedule(&self) -> Vec<FusionStep> {
        (0..self.char_layers)
            .map(|l| {
                let t = l * self.ngram_layers / self.char_layers;
                let advance = l == 0 || (l - 1) * self.ngram_layers / self.char_layers != t;
                FusionStep {
                    backbone_layer: l,
                    ngram_layer: t,
                    advance,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_to_one_schedule() {
        let c = ModelConfig {
            char_layers: 3,
            ngram_layers: 3,
            ..Default::default()
        };
        let s = c.fusion_schedule();
        assert!(s.iter().all(|f| f.advance && f.ngram_layer == f.backbone_layer));
    }

    #[test]
    fn uneven_schedule_advances_each_ngram_layer_once() {
        for (lc, ln) in [(12, 6), (4, 2), (5, 3), (7, 1), (6, 4)] {
            let c = ModelConfig {
                char_layers: lc,
                ngram_layers: ln,
                ..Default::default()
            };
            let s = c.fusion_schedule();
            assert_eq!(s.len(), lc);
            let advances: Vec<usize> = s.iter().filter(|f| f.advance).map(|f| f.ngram_layer).collect();
            assert_eq!(advances, (0..ln).collect::<Vec<_>>(), "{lc}/{ln}");
            assert!(s.windows(2).all(|w| w[0].ngram_layer <= w[1].ngram_layer));
        }
    }

    #[test]
    fn validation() {
        let ok = ModelConfig {
            vocab_size: 10,
            ..Default::default()
        };
        ok.validate().unwrap();
        assert!(ModelConfig { heads: 3, ..ok.clone() }.validate().is_err());
        assert!(ModelConfig {
            ngram_layers: 5,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(ModelConfig { vocab_size: 0, ..ok }.validate().is_err());
        ModelConfig::paper_scale(21128, 104_000).validate().unwrap();
    }
}
