//! Fine-tune a sentence-pair classifier (does the second sentence talk
//! about the same phrase as the first?) on generated data.
//!
//! cargo run --release --example classification

use rand::Rng;

use zen::corpus::Vocab;
use zen::finetune::{finetune, ClassificationExample, FinetuneConfig, TaskData, TaskKind, TaskModel, TaskSpec};
use zen::model::{ModelConfig, ZenModel};
use zen::pretrain::synthetic::{generate, PhraseCorpusConfig};
use zen::seeds::rng_for;

fn main() -> zen::Result<()> {
    let pc = generate(&PhraseCorpusConfig {
        sentences: 100,
        inventory: 20,
        ..Default::default()
    })?;
    let lexicon = pc.true_lexicon()?;
    let mut rng = rng_for(0, "classification", 0);
    let mut make = |n: usize| -> Vec<ClassificationExample> {
        (0..n)
            .map(|_| {
                let p = &pc.phrases[rng.gen_range(0..pc.phrases.len())];
                let same = rng.gen_bool(0.5);
                let q = if same { p } else { &pc.phrases[rng.gen_range(0..pc.phrases.len())] };
                let filler = &pc.phrases[rng.gen_range(0..pc.phrases.len())];
                ClassificationExample {
                    text_a: format!("{filler}{p}"),
                    text_b: Some(format!("{q}{filler}")),
                    label: usize::from(p == q),
                }
            })
            .collect()
    };
    let (train, dev) = (make(120), make(40));
    let vocab = Vocab::build(train.iter().chain(&dev).flat_map(|e| [e.text_a.clone(), e.text_b.clone().unwrap()]), 1);
    let task = TaskSpec {
        name: "same-phrase".into(),
        kind: TaskKind::Classification,
        labels: vec!["different".into(), "same".into()],
    };
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
    let model = TaskModel::new(ZenModel::new(cfg, 0)?, vocab, Some(lexicon), task.clone(), 128, 0)?;
    let out = finetune(
        model,
        &TaskData::Classification(train),
        &TaskData::Classification(dev),
        &FinetuneConfig {
            epochs: 15,
            peak_lr: 2e-3,
            ..Default::default()
        },
    )?;
    print!("{}", out.history_csv());
    print!("{}", out.best().dev.report(&task.name));
    Ok(())
}
