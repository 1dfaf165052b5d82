//! Pretrain a small model with MLM and NSP on the generated phrase corpus,
//! writing metrics and checkpoints to a directory.
//!
//! cargo run --release --example pretrain -- [out_dir] [steps]

use std::path::PathBuf;

use zen::corpus::Vocab;
use zen::model::{ModelConfig, ZenModel};
use zen::pretrain::synthetic::{generate, PhraseCorpusConfig};
use zen::pretrain::{TrainConfig, Trainer};

fn main() -> zen::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "pretrain-out".into()));
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);

    let pc = generate(&PhraseCorpusConfig {
        sentences: 1000,
        ..Default::default()
    })?;
    let lexicon = pc.true_lexicon()?;
    let vocab = Vocab::build(pc.corpus.sentences(), 1);
    let model = ZenModel::new(
        ModelConfig {
            char_layers: 2,
            ngram_layers: 1,
            hidden: 64,
            heads: 2,
            ffn: 128,
            max_len: 64,
            vocab_size: vocab.len(),
            lexicon_size: lexicon.len(),
            ..ModelConfig::default()
        },
        0,
    )?;
    let cfg = TrainConfig {
        batch_size: 16,
        steps,
        peak_lr: 2e-3,
        log_every: 10,
        checkpoint_every: 100,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, Some(lexicon), &pc.corpus, vocab, cfg)?;
    for m in trainer.run(Some(&out))?.iter().step_by(25) {
        println!("step {:>4}  loss {:.4}  mlm {:.4}  nsp {:.4}  acc {:.3}", m.step, m.total_loss, m.mlm_loss, m.nsp_loss, m.mlm_acc);
    }
    println!("metrics and checkpoints in {}", out.display());
    Ok(())
}
