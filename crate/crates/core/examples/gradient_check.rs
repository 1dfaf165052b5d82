//! Compare analytic gradients of the pretraining loss with central
//! differences on a tiny model, one line per parameter tensor.
//!
//! cargo run --release --example gradient_check

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use zen::corpus::{make_instance, Vocab};
use zen::lexicon::extract;
use zen::matcher::Matcher;
use zen::model::{ModelConfig, Mode, ZenModel};
use zen::numerics::{grad_check, Graph, ParamStore};
use zen::pretrain::{instance_ngrams, pretrain_objective};

fn main() -> zen::Result<()> {
    let (a, b) = ("天气很好天气不错", "我们出去玩吧天气");
    let vocab = Vocab::build([a, b], 1);
    let lexicon = extract([a, b], 2, 3, 2)?;
    let inst = make_instance(a, b, true, &vocab, 0.15, 32, &mut ChaCha8Rng::seed_from_u64(1))?;
    let matcher = Matcher::new(&lexicon);
    let ngrams = instance_ngrams(Some(&matcher), &inst, 128).expect("matcher given");
    println!("k_c = {}, k_n = {}", inst.len(), ngrams.num_ngrams());

    let cfg = ModelConfig {
        char_layers: 2,
        ngram_layers: 2,
        hidden: 16,
        heads: 2,
        ffn: 32,
        max_len: 32,
        vocab_size: vocab.len(),
        lexicon_size: lexicon.len(),
        dropout: 0.0,
        init_std: 0.5,
        ..ModelConfig::default()
    };
    let model = ZenModel::new(cfg, 0)?;
    let objective = |params: &ParamStore, want: bool| {
        let mut g = Graph::new(params);
        let loss = pretrain_objective(&model, &mut g, &inst, Some(&ngrams), Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))?;
        let grads = if want { Some(g.backward(loss.total)?) } else { None };
        Ok((g.value(loss.total).item(), grads))
    };
    let report = grad_check(model.params(), objective, 1e-5, 1e-4)?;
    print!("{report}");
    println!("passed: {}", report.passed());
    Ok(())
}
