//! Independent oracles and random fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use zen::corpus::{make_instance, PretrainInstance, Vocab};
use zen::finetune::Scheme;
use zen::lexicon::{LexiconEntry, NgramLexicon};
use zen::model::ModelConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Small alphabet so random lexicons actually hit random text.
pub const ALPHABET: [char; 6] = ['天', '气', '很', '好', '我', '们'];

pub fn random_text<R: Rng>(rng: &mut R, len: usize) -> String {
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

/// Random lexicon of up to `max_entries` distinct n-grams of length
/// `n_min..=n_max` over [`ALPHABET`], with random frequencies.
pub fn random_lexicon<R: Rng>(rng: &mut R, max_entries: usize, n_min: usize, n_max: usize) -> NgramLexicon {
    let target = rng.gen_range(1..=max_entries);
    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    for _ in 0..target * 4 {
        if entries.len() == target {
            break;
        }
        let n = rng.gen_range(n_min..=n_max);
        let s = random_text(rng, n);
        if seen.insert(s.clone()) {
            entries.push(LexiconEntry {
                ngram: s,
                freq: rng.gen_range(1..=20),
            });
        }
    }
    entries.sort_by(|a, b| b.freq.cmp(&a.freq).then_with(|| a.ngram.cmp(&b.ngram)));
    NgramLexicon::from_entries(entries, n_min, n_max, 1).unwrap()
}

/// Lexicon from explicit `(ngram, freq)` pairs.
pub fn lexicon_of(pairs: &[(&str, u64)]) -> NgramLexicon {
    let mut entries: Vec<LexiconEntry> = pairs
        .iter()
        .map(|&(s, f)| LexiconEntry {
            ngram: s.to_string(),
            freq: f,
        })
        .collect();
    entries.sort_by(|a, b| b.freq.cmp(&a.freq).then_with(|| a.ngram.cmp(&b.ngram)));
    let n_max = pairs.iter().map(|p| p.0.chars().count()).max().unwrap_or(2).max(2);
    NgramLexicon::from_entries(entries, 2, n_max, 1).unwrap()
}

/// Random character sequence with occasional special tokens (`None`).
pub fn random_chars<R: Rng>(rng: &mut R, len: usize) -> Vec<Option<char>> {
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.08) {
                None
            } else {
                Some(*ALPHABET.choose(rng).unwrap())
            }
        })
        .collect()
}

/// Every `(ngram_id, start, len)` such that the substring at `start` of
/// length `len` contains no special token and equals a lexicon entry, found
/// by comparing each entry against every window.
pub fn brute_force_matches(chars: &[Option<char>], lexicon: &NgramLexicon) -> BTreeSet<(usize, usize, usize)> {
    let mut out = BTreeSet::new();
    for (id, e) in lexicon.entries().iter().enumerate() {
        let target: Vec<char> = e.ngram.chars().collect();
        let n = target.len();
        if n > chars.len() {
            continue;
        }
        for start in 0..=chars.len() - n {
            if chars[start..start + n].iter().zip(&target).all(|(c, t)| *c == Some(*t)) {
                out.insert((id, start, n));
            }
        }
    }
    out
}

/// Occurrence counts of every substring of length `n_min..=n_max` in every
/// line, read off character windows.
pub fn window_counts<S: AsRef<str>>(lines: &[S], n_min: usize, n_max: usize) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for line in lines {
        let chars: Vec<char> = line.as_ref().chars().collect();
        for n in n_min..=n_max {
            for w in chars.windows(n) {
                *counts.entry(w.iter().collect::<String>()).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Occurrences of `needle` in `hay` counted by scanning every start offset.
pub fn naive_count(hay: &str, needle: &str) -> u64 {
    let h: Vec<char> = hay.chars().collect();
    let n: Vec<char> = needle.chars().collect();
    if n.is_empty() || n.len() > h.len() {
        return 0;
    }
    (0..=h.len() - n.len()).filter(|&i| h[i..i + n.len()] == n[..]).count() as u64
}

/// `V + M·U` written as the per-character sum over covering n-grams.
pub fn fuse_loop(v: &[f64], u: &[f64], m: &[f64], kc: usize, kn: usize, d: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    for i in 0..kc {
        for k in 0..kn {
            if m[i * kn + k] != 0.0 {
                for x in 0..d {
                    out[i * d + x] += m[i * kn + k] * u[k * d + x];
                }
            }
        }
    }
    out
}

/// Rewrite `labels` into a well-formed sequence using the documented repair
/// rule, then chunk it into `(start, end, type)` spans.
pub fn oracle_spans(scheme: Scheme, labels: &[String]) -> BTreeSet<(usize, usize, String)> {
    let parse = |l: &str| -> (char, String) {
        let mut it = l.splitn(2, '-');
        let p = it.next().unwrap().chars().next().unwrap_or('O');
        (p, it.next().unwrap_or("").to_string())
    };
    let mut fixed: Vec<(char, String)> = Vec::with_capacity(labels.len());
    let mut open: Option<String> = None;
    for l in labels {
        let (p, t) = parse(l);
        match scheme {
            Scheme::Bmes => {
                let cont = open.as_deref() == Some(t.as_str());
                let p = match p {
                    'M' if cont => 'M',
                    'E' if cont => 'E',
                    'M' | 'B' => 'B',
                    'E' | 'S' => 'S',
                    _ => 'O',
                };
                if p != 'M' && p != 'E' && open.is_some() {
                    close_bmes(&mut fixed);
                }
                open = match p {
                    'B' | 'M' => Some(t.clone()),
                    _ => None,
                };
                fixed.push((p, t));
            }
            Scheme::Bio => {
                let cont = open.as_deref() == Some(t.as_str());
                let p = match p {
                    'I' if cont => 'I',
                    'I' | 'B' => 'B',
                    _ => 'O',
                };
                open = if p == 'O' { None } else { Some(t.clone()) };
                fixed.push((p, t));
            }
        }
    }
    if scheme == Scheme::Bmes && open.is_some() {
        close_bmes(&mut fixed);
    }

    let mut spans = BTreeSet::new();
    let mut start = None;
    for (i, (p, t)) in fixed.iter().enumerate() {
        match (scheme, p) {
            (Scheme::Bmes, 'B') => start = Some(i),
            (Scheme::Bmes, 'E') => {
                spans.insert((start.take().unwrap(), i + 1, t.clone()));
            }
            (Scheme::Bmes, 'S') => {
                spans.insert((i, i + 1, t.clone()));
            }
            (Scheme::Bio, 'B') => {
                if let Some(s) = start.take() {
                    spans.insert((s, i, fixed[s].1.clone()));
                }
                start = Some(i);
            }
            (Scheme::Bio, 'O') => {
                if let Some(s) = start.take() {
                    spans.insert((s, i, fixed[s].1.clone()));
                }
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.insert((s, fixed.len(), fixed[s].1.clone()));
    }
    spans
}

/// End the open BMES span at the last label: `B` becomes `S`, `M` becomes `E`.
fn close_bmes(fixed: &mut [(char, String)]) {
    let last = fixed.last_mut().unwrap();
    last.0 = if last.0 == 'B' { 'S' } else { 'E' };
}

/// Precision, recall and F1 of `pred` against `gold` span sets, summed over
/// all sentences, by set intersection.
pub fn oracle_prf(gold: &[BTreeSet<(usize, usize, String)>], pred: &[BTreeSet<(usize, usize, String)>]) -> (f64, f64, f64) {
    let (mut g, mut p, mut c) = (0usize, 0usize, 0usize);
    for (gs, ps) in gold.iter().zip(pred) {
        g += gs.len();
        p += ps.len();
        c += gs.intersection(ps).count();
    }
    let precision = if p == 0 {
        if g == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        c as f64 / p as f64
    };
    let recall = if g == 0 {
        if p == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        c as f64 / g as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

pub fn random_labels<R: Rng>(rng: &mut R, scheme: Scheme, len: usize) -> Vec<String> {
    let pool: &[&str] = match scheme {
        Scheme::Bmes => &["B", "M", "E", "S"],
        Scheme::Bio => &["O", "B-PER", "I-PER", "B-LOC", "I-LOC"],
    };
    (0..len).map(|_| pool.choose(rng).unwrap().to_string()).collect()
}

/// Tiny model shape used across tests.
pub fn tiny_config(vocab_size: usize, lexicon_size: usize) -> ModelConfig {
    ModelConfig {
        char_layers: 2,
        ngram_layers: 2,
        hidden: 16,
        heads: 2,
        ffn: 32,
        max_len: 32,
        vocab_size,
        lexicon_size,
        dropout: 0.0,
        ..ModelConfig::default()
    }
}

pub fn alphabet_vocab() -> Vocab {
    Vocab::from_chars(ALPHABET).unwrap()
}

/// Masked pretraining instance over two random sentences.
pub fn random_instance<R: Rng>(rng: &mut R, vocab: &Vocab, max_len: usize) -> PretrainInstance {
    let (la, lb) = (rng.gen_range(3..12), rng.gen_range(3..12));
    let a = random_text(rng, la);
    let b = random_text(rng, lb);
    make_instance(&a, &b, rng.gen_bool(0.5), vocab, 0.15, max_len, rng).unwrap()
}

/// Small multi-document corpus text over [`ALPHABET`].
pub fn small_corpus_text(seed: u64, docs: usize, sentences: usize) -> String {
    let mut r = rng(seed);
    let mut s = String::new();
    for _ in 0..docs {
        for _ in 0..sentences {
            let len = r.gen_range(4..10);
            s.push_str(&random_text(&mut r, len));
            s.push('\n');
        }
        s.push('\n');
    }
    s
}
