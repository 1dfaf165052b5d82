//! Extract an n-gram lexicon from a corpus file and print its size per
//! n-gram length at several thresholds.
//!
//! cargo run --release --example build_lexicon -- [corpus.txt]

use std::path::PathBuf;

use zen::corpus::Corpus;
use zen::lexicon::extract_sharded;

fn main() -> zen::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus_10k.txt"));
    let corpus = Corpus::load(&path)?;
    let lines: Vec<String> = corpus.sentences().map(str::to_owned).collect();
    println!("{} sentences from {}", lines.len(), path.display());
    for threshold in [2, 5, 15, 40] {
        let lex = extract_sharded(&lines, 2, 8, threshold, 2)?;
        let by_len: Vec<String> = lex.size_by_length().iter().map(|(n, c)| format!("n={n}:{c}")).collect();
        println!("threshold {threshold:>2}: {:>5} entries  {}", lex.len(), by_len.join(" "));
    }
    let lex = extract_sharded(&lines, 2, 8, 15, 2)?;
    println!("\nmost frequent at threshold 15:");
    for e in lex.entries().iter().take(10) {
        println!("  {}\t{}", e.ngram, e.freq);
    }
    println!("content hash {}", lex.content_hash());
    Ok(())
}
