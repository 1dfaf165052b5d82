//! Steps needed to reach a masked-token accuracy target, with the true
//! phrase lexicon and without any lexicon, on the generated phrase corpus.
//!
//! cargo run --release --example convergence -- [seed ...]

use zen::pretrain::synthetic::{generate, steps_to_accuracy, ConvergenceConfig, PhraseCorpusConfig};

fn main() -> zen::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let seeds = if seeds.is_empty() { vec![0] } else { seeds };
    println!("seed,lexicon,baseline");
    for seed in seeds {
        let pc = generate(&PhraseCorpusConfig {
            seed,
            ..Default::default()
        })?;
        let lexicon = pc.true_lexicon()?;
        let mut cfg = ConvergenceConfig::default();
        cfg.train.seed = seed;
        let with = steps_to_accuracy(&pc.corpus, Some(&lexicon), lexicon.len(), &cfg)?;
        let without = steps_to_accuracy(&pc.corpus, None, lexicon.len(), &cfg)?;
        let show = |s: Option<usize>| s.map_or("never".to_string(), |s| s.to_string());
        println!("{seed},{},{}", show(with.steps_to_target), show(without.steps_to_target));
    }
    Ok(())
}
