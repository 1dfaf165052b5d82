//! Per-layer attention weights of the n-grams matched in a sentence.
//!
//! cargo run --release --example heatmap -- [sentence]

use zen::corpus::{single_segment, Vocab};
use zen::lexicon::extract;
use zen::matcher::Matcher;
use zen::model::heatmap::export_ngram_weights;
use zen::model::{EncoderInput, ModelConfig, ZenModel};

fn main() -> zen::Result<()> {
    let text = std::env::args().nth(1).unwrap_or_else(|| "今天天气很好我们出去玩".into());
    let corpus = ["今天天气很好", "天气很好我们出去玩", "我们出去玩吧", "今天我们在家"];
    let vocab = Vocab::build(corpus.iter().copied().chain([text.as_str()]), 1);
    let lexicon = extract(corpus, 2, 4, 2)?;
    let model = ZenModel::new(
        ModelConfig {
            char_layers: 4,
            ngram_layers: 2,
            hidden: 32,
            heads: 4,
            ffn: 64,
            max_len: 64,
            vocab_size: vocab.len(),
            lexicon_size: lexicon.len(),
            ..ModelConfig::default()
        },
        0,
    )?;
    let (ids, segs, chars) = single_segment(&text, &vocab, 64);
    let m = Matcher::new(&lexicon).find(&chars, 128);
    let weights = export_ngram_weights(
        &model,
        &EncoderInput {
            token_ids: &ids,
            segment_ids: &segs,
            ngrams: Some(&m),
        },
    )?;
    if weights.is_empty() {
        println!("no lexicon n-grams in {text:?}");
        return Ok(());
    }
    print!("{}", weights.to_tsv(&lexicon));
    Ok(())
}
