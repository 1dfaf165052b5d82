//! Span-level scoring of predicted BMES and BIO label sequences.
//!
//! cargo run --example evaluate

use zen::finetune::{decode_spans, score_tagging, Scheme};

fn main() -> zen::Result<()> {
    let gold = vec![vec!["B", "E", "S", "B", "M", "E"], vec!["S", "S", "B", "E"]];
    let pred = vec![vec!["B", "E", "S", "B", "E", "S"], vec!["S", "S", "M", "E"]];
    for (g, p) in gold.iter().zip(&pred) {
        println!("gold {:?}\npred {:?}", decode_spans(Scheme::Bmes, g), decode_spans(Scheme::Bmes, p));
    }
    print!("{}", score_tagging(Scheme::Bmes, &gold, &pred)?.report("segmentation"));

    let gold = vec![vec!["B-PER", "I-PER", "O", "B-LOC"]];
    let pred = vec![vec!["B-PER", "I-PER", "O", "B-PER"]];
    print!("{}", score_tagging(Scheme::Bio, &gold, &pred)?.report("ner"));
    Ok(())
}
