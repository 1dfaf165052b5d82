//! Per-layer n-gram weights from the n-gram encoder's self-attention.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EncoderInput, Mode, ZenModel};
use crate::error::{Error, Result};
use crate::lexicon::NgramLexicon;
use crate::matcher::NgramOccurrence;
use crate::numerics::Graph;

pub const HEATMAP_HEADER: &str = "# weight = attention mass the occurrence receives in the layer's \
self-attention, averaged over heads and query n-grams (each layer's weights sum to 1)";

#[derive(Clone, Debug, PartialEq)]
pub struct NgramWeights {
    pub occurrences: Vec<NgramOccurrence>,
    /// `layers[t][j]`: weight of occurrence `j` in n-gram layer `t`.
    pub layers: Vec<Vec<f64>>,
}

impl NgramWeights {
    pub fn is_empty(&self) -> bool {
        self.occurrences.is_empty()
    }

    /// `layer<TAB>occurrence_index<TAB>ngram<TAB>weight`, preceded by a
    /// comment describing the weight and a column header.
    pub fn to_tsv(&self, lexicon: &NgramLexicon) -> String {
        let mut s = format!("{HEATMAP_HEADER}\nlayer\toccurrence_index\tngram\tweight\n");
        for (t, w) in self.layers.iter().enumerate() {
            for (j, o) in self.occurrences.iter().enumerate() {
                let _ = writeln!(s, "{t}\t{j}\t{}\t{:.6}", lexicon.entry(o.ngram_id).ngram, w[j]);
            }
        }
        s
    }
}

/// Eval-mode forward, then for every n-gram layer the weight of occurrence
/// `j` is `(1 / (heads * k_n)) * sum_h sum_q A_h[q, j]`.
pub fn export_ngram_weights(model: &ZenModel, input: &EncoderInput) -> Result<NgramWeights> {
    let m = input
        .ngrams
        .ok_or_else(|| Error::invalid("n-gram weights need a match state"))?;
    let kn = m.num_ngrams();
    if kn == 0 {
        return Ok(NgramWeights {
            occurrences: Vec::new(),
            layers: Vec::new(),
        });
    }
    let mut g = Graph::new(model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = model.forward(&mut g, input, Mode::Eval, &mut rng)?;
    let layers = out
        .ngram_attention
        .iter()
        .map(|heads| {
            let mut w = vec![0.0; kn];
            for &h in heads {
                let a = g.value(h);
                for q in 0..kn {
                    for (j, wj) in w.iter_mut().enumerate() {
                        *wj += a.get(q, j);
                    }
                }
            }
            let norm = (heads.len() * kn) as f64;
            w.iter().map(|v| v / norm).collect()
        })
        .collect();
    Ok(NgramWeights {
        occurrences: m.occurrences().to_vec(),
        layers,
    })
}
