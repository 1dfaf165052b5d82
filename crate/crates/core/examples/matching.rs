//! Match a sentence pair against a lexicon and dump the occurrences and the
//! matching matrix, before and after masked-position exclusion.
//!
//! cargo run --example matching

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use zen::corpus::{make_instance, Vocab};
use zen::lexicon::{LexiconEntry, NgramLexicon};
use zen::matcher::Matcher;

fn main() -> zen::Result<()> {
    let entries = [("天气", 40), ("很好", 31), ("天气很好", 12), ("我们", 50), ("出去玩", 7)]
        .into_iter()
        .map(|(s, f)| LexiconEntry {
            ngram: s.to_string(),
            freq: f,
        })
        .collect::<Vec<_>>();
    let mut sorted = entries;
    sorted.sort_by(|a, b| b.freq.cmp(&a.freq).then_with(|| a.ngram.cmp(&b.ngram)));
    let lexicon = NgramLexicon::from_entries(sorted, 2, 4, 1)?;

    let (a, b) = ("今天天气很好", "我们出去玩");
    let vocab = Vocab::build([a, b], 1);
    let inst = make_instance(a, b, true, &vocab, 0.15, 32, &mut ChaCha8Rng::seed_from_u64(3))?;
    let matcher = Matcher::new(&lexicon);
    let all = matcher.find(&inst.chars, 128);
    println!("{}", all.debug_dump(&lexicon));
    println!("masked positions {:?}", inst.mask_positions);
    let kept = all.exclude_masked(&inst.mask_positions);
    println!("{}", kept.debug_dump(&lexicon));
    let capped = matcher.find(&inst.chars, 2);
    println!("budget 2 keeps the longest, most frequent:\n{}", capped.debug_dump(&lexicon));
    Ok(())
}
