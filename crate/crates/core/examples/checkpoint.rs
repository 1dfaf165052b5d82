//! Save a training run mid-way, resume it, and show that the resumed steps
//! reproduce the uninterrupted run exactly.
//!
//! cargo run --release --example checkpoint

use zen::corpus::{Corpus, Vocab};
use zen::lexicon::extract;
use zen::model::{checkpoint, ModelConfig, ZenModel};
use zen::pretrain::{TrainConfig, Trainer};

fn main() -> zen::Result<()> {
    let corpus = Corpus::parse("今天天气很好\n我们出去玩吧\n天气好就出去\n\n明天天气不好\n我们在家看书\n书很好看\n");
    let vocab = Vocab::build(corpus.sentences(), 1);
    let lexicon = extract(corpus.sentences(), 2, 3, 2)?;
    let cfg = TrainConfig {
        batch_size: 2,
        steps: 8,
        peak_lr: 1e-3,
        ..TrainConfig::default()
    };
    let model_cfg = ModelConfig {
        char_layers: 2,
        ngram_layers: 1,
        hidden: 16,
        heads: 2,
        ffn: 32,
        max_len: 32,
        vocab_size: vocab.len(),
        lexicon_size: lexicon.len(),
        ..ModelConfig::default()
    };
    let new = || -> zen::Result<Trainer> {
        Trainer::new(ZenModel::new(model_cfg.clone(), 0)?, Some(lexicon.clone()), &corpus, vocab.clone(), cfg.clone())
    };

    let full = new()?.run(None)?;
    let dir = tempfile_dir()?;
    let mut first = new()?;
    for _ in 0..4 {
        first.step()?;
    }
    first.save_checkpoint(&dir)?;
    let meta = checkpoint::read_meta(&dir)?;
    println!("saved step {} (lexicon {}…)", meta.step, &meta.lexicon_hash[..12]);

    let mut resumed = Trainer::resume(&dir, Some(lexicon.clone()), &corpus, vocab.clone(), cfg.clone())?;
    for (a, b) in resumed.run(None)?.iter().zip(&full[4..]) {
        println!("step {}: resumed {:.10} uninterrupted {:.10} identical {}", a.step, a.total_loss, b.total_loss, a == b);
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

fn tempfile_dir() -> zen::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("zen-checkpoint-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| zen::Error::Invalid(e.to_string()))?;
    Ok(dir)
}
