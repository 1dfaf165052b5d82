//! Fine-tune a small randomly initialised model for word segmentation on
//! generated BMES data, with and without the phrase lexicon.
//!
//! cargo run --release --example segmentation

use zen::corpus::Vocab;
use zen::finetune::data::{scheme_labels, synthetic_segmentation};
use zen::finetune::{finetune, FinetuneConfig, Scheme, TaskData, TaskKind, TaskModel, TaskSpec};
use zen::model::{ModelConfig, ZenModel};
use zen::pretrain::synthetic::{generate, PhraseCorpusConfig};
use zen::seeds::rng_for;

fn main() -> zen::Result<()> {
    let pc = generate(&PhraseCorpusConfig {
        sentences: 200,
        ..Default::default()
    })?;
    let lexicon = pc.true_lexicon()?;
    let train = synthetic_segmentation(&pc.phrases, 50, 3, 6, &mut rng_for(0, "segmentation", 0));
    let vocab = Vocab::build(train.iter().map(|e| e.text()), 1);
    let data = TaskData::Tagging(train);
    let task = TaskSpec {
        name: "segmentation".into(),
        kind: TaskKind::Tagging { scheme: Scheme::Bmes },
        labels: scheme_labels(Scheme::Bmes, &[]),
    };
    for (name, lex) in [("lexicon", Some(lexicon.clone())), ("none", None)] {
        let cfg = ModelConfig {
            char_layers: 2,
            ngram_layers: 1,
            hidden: 32,
            heads: 2,
            ffn: 64,
            max_len: 64,
            vocab_size: vocab.len(),
            lexicon_size: lexicon.len(),
            dropout: 0.0,
            ..ModelConfig::default()
        };
        let model = TaskModel::new(ZenModel::new(cfg, 0)?, vocab.clone(), lex, task.clone(), 128, 0)?;
        let ft = FinetuneConfig {
            epochs: 30,
            peak_lr: std::env::var("LR").ok().and_then(|v| v.parse().ok()).unwrap_or(2e-3),
            ..Default::default()
        };
        let out = finetune(model, &data, &data, &ft)?;
        println!("[{name}]");
        print!("{}", out.history_csv());
        print!("{}", out.model.evaluate(&data)?.report(&task.name));
    }
    Ok(())
}
