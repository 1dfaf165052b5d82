//! Text normalization, the character vocabulary and pretraining instances.
//!
//! Tokens are Unicode scalar values: every character of normalized text is
//! one token. Special tokens occupy ids 0..=4.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const CLS: usize = 1;
pub const SEP: usize = 2;
pub const MASK: usize = 3;
pub const UNK: usize = 4;
pub const NUM_SPECIAL: usize = 5;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIAL] = ["[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"];

/// Version tag of the normalization removal table below.
pub const NORMALIZATION_VERSION: u32 = 1;

/// Characters dropped by [`normalize`] (table version 1), besides all
/// control characters and all whitespace.
const REMOVED_RANGES: &[(char, char)] = &[
    ('\u{00AD}', '\u{00AD}'), // soft hyphen
    ('\u{200B}', '\u{200F}'), // zero-width space/joiners, direction marks
    ('\u{202A}', '\u{202E}'), // bidi embedding controls
    ('\u{2060}', '\u{2064}'), // word joiner, invisible operators
    ('\u{E000}', '\u{F8FF}'), // private use area
    ('\u{FEFF}', '\u{FEFF}'), // byte order mark
    ('\u{FFFD}', '\u{FFFD}'), // replacement character
];

fn is_removed(c: char) -> bool {
    c.is_control() || c.is_whitespace() || REMOVED_RANGES.iter().any(|&(lo, hi)| lo <= c && c <= hi)
}

/// Lowercase letters and drop control, whitespace and the removal table.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if is_removed(c) {
            continue;
        }
        if c.is_uppercase() {
            out.extend(c.to_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

/// Character-to-id table with the reserved tokens at ids 0..=4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    chars: HashMap<char, usize>,
}

impl Vocab {
    /// Vocabulary holding only the reserved tokens.
    pub fn reserved_only() -> Self {
        Self {
            tokens: SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect(),
            chars: HashMap::new(),
        }
    }

    /// Build from normalized lines. Characters seen at least `min_count`
    /// times get ids in order of descending frequency, ties by codepoint.
    pub fn build<I, S>(lines: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<char, usize> = HashMap::new();
        for line in lines {
            for c in line.as_ref().chars() {
                *counts.entry(c).or_default() += 1;
            }
        }
        let mut kept: Vec<(char, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_count.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut vocab = Self::reserved_only();
        for (c, _) in kept {
            vocab.push_char(c);
        }
        vocab
    }

    /// Vocabulary from an explicit character list (in id order).
    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Result<Self> {
        let mut vocab = Self::reserved_only();
        for c in chars {
            if vocab.chars.contains_key(&c) {
                return Err(Error::invalid(format!("duplicate vocabulary character {c:?}")));
            }
            vocab.push_char(c);
        }
        Ok(vocab)
    }

    fn push_char(&mut self, c: char) {
        self.chars.insert(c, self.tokens.len());
        self.tokens.push(c.to_string());
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, c: char) -> usize {
        self.chars.get(&c).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, c: char) -> bool {
        self.chars.contains_key(&c)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.chars().map(|c| self.id(c)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().filter_map(|&i| self.token(i)).collect()
    }

    /// The character behind an id; `None` for reserved ids.
    pub fn char_of(&self, id: usize) -> Option<char> {
        if id < NUM_SPECIAL {
            return None;
        }
        self.tokens.get(id).and_then(|t| t.chars().next())
    }

    /// One token per line, line number = id.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.display().to_string(),
            line,
            msg,
        };
        let mut vocab = Self::reserved_only();
        for (i, line) in text.lines().enumerate() {
            if i < NUM_SPECIAL {
                if line != SPECIAL_TOKENS[i] {
                    return Err(parse_err(i + 1, format!("expected {}", SPECIAL_TOKENS[i])));
                }
                continue;
            }
            let mut it = line.chars();
            match (it.next(), it.next()) {
                (Some(c), None) if !vocab.chars.contains_key(&c) => vocab.push_char(c),
                (Some(_), None) => return Err(parse_err(i + 1, format!("duplicate token {line:?}"))),
                _ => return Err(parse_err(i + 1, format!("token {line:?} is not one character"))),
            }
        }
        if text.lines().count() < NUM_SPECIAL {
            return Err(parse_err(text.lines().count() + 1, "missing reserved tokens".into()));
        }
        Ok(vocab)
    }
}

/// Documents of sentences: one sentence per line, blank line between
/// documents. Lines are normalized on read; lines empty after
/// normalization are dropped.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Vec<String>>,
}

impl Corpus {
    pub fn parse(text: &str) -> Self {
        Self::from_lines(text.lines().map(str::to_owned))
    }

    pub fn from_lines<I: IntoIterator<Item = String>>(lines: I) -> Self {
        let mut documents = Vec::new();
        let mut current = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                if !current.is_empty() {
                    documents.push(std::mem::take(&mut current));
                }
                continue;
            }
            let s = normalize(&line);
            if !s.is_empty() {
                current.push(s);
            }
        }
        if !current.is_empty() {
            documents.push(current);
        }
        Self { documents }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let lines = BufReader::new(f)
            .lines()
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(path, e))?;
        Ok(Self::from_lines(lines))
    }

    pub fn sentences(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().flatten().map(String::as_str)
    }

    pub fn num_sentences(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }
}

/// A masked sentence pair laid out as `[CLS] a… [SEP] b… [SEP]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PretrainInstance {
    /// Token ids after masking.
    pub token_ids: Vec<usize>,
    pub segment_ids: Vec<usize>,
    /// Original (unmasked) character at each position; `None` for specials.
    pub chars: Vec<Option<char>>,
    /// Ascending masked positions.
    pub mask_positions: Vec<usize>,
    /// Original id at each masked position.
    pub mlm_labels: Vec<usize>,
    /// True when `b` followed `a` in the corpus.
    pub is_next: bool,
}

impl PretrainInstance {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn nsp_label(&self) -> usize {
        if self.is_next {
            0
        } else {
            1
        }
    }
}

/// Drop trailing characters from the longer segment until the pair plus
/// three special tokens fits in `max_len`.
pub fn truncate_pair(a: &mut Vec<char>, b: &mut Vec<char>, max_len: usize) {
    let budget = max_len.saturating_sub(3);
    while a.len() + b.len() > budget {
        if a.len() > b.len() {
            a.pop();
        } else {
            b.pop();
        }
    }
}

/// Number of positions to mask: `round(rate * maskable)`, at least one when
/// anything is maskable.
pub fn mask_count(maskable: usize, mask_rate: f64) -> usize {
    if maskable == 0 {
        return 0;
    }
    ((mask_rate * maskable as f64).round() as usize).clamp(1, maskable)
}

/// Build a masked instance from a sentence pair.
///
/// Of the selected positions, 80% become `[MASK]`, 10% a uniformly random
/// non-special id and 10% keep their token. Everything is determined by
/// `rng`.
pub fn make_instance<R: Rng + ?Sized>(
    sent_a: &str,
    sent_b: &str,
    is_next: bool,
    vocab: &Vocab,
    mask_rate: f64,
    max_len: usize,
    rng: &mut R,
) -> Result<PretrainInstance> {
    let mut a: Vec<char> = sent_a.chars().collect();
    let mut b: Vec<char> = sent_b.chars().collect();
    truncate_pair(&mut a, &mut b, max_len);
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid(format!(
            "sentence pair is empty after truncation to max_len {max_len}"
        )));
    }
    let mut chars = Vec::with_capacity(a.len() + b.len() + 3);
    let mut segment_ids = Vec::with_capacity(chars.capacity());
    chars.push(None);
    segment_ids.push(0);
    for &c in &a {
        chars.push(Some(c));
        segment_ids.push(0);
    }
    chars.push(None);
    segment_ids.push(0);
    for &c in &b {
        chars.push(Some(c));
        segment_ids.push(1);
    }
    chars.push(None);
    segment_ids.push(1);

    let sep_a = a.len() + 1;
    let mut token_ids: Vec<usize> = chars
        .iter()
        .enumerate()
        .map(|(i, c)| match c {
            Some(c) => vocab.id(*c),
            None if i == 0 => CLS,
            None => SEP,
        })
        .collect();
    debug_assert_eq!(token_ids[sep_a], SEP);

    let maskable: Vec<usize> = (0..chars.len()).filter(|&i| chars[i].is_some()).collect();
    let n = mask_count(maskable.len(), mask_rate);
    let mut mask_positions: Vec<usize> = index::sample(rng, maskable.len(), n)
        .into_iter()
        .map(|k| maskable[k])
        .collect();
    mask_positions.sort_unstable();

    let mut mlm_labels = Vec::with_capacity(n);
    for &p in &mask_positions {
        mlm_labels.push(token_ids[p]);
        let r: f64 = rng.gen();
        if r < 0.8 {
            token_ids[p] = MASK;
        } else if r < 0.9 {
            if vocab.len() > NUM_SPECIAL {
                token_ids[p] = rng.gen_range(NUM_SPECIAL..vocab.len());
            }
        }
    }

    Ok(PretrainInstance {
        token_ids,
        segment_ids,
        chars,
        mask_positions,
        mlm_labels,
        is_next,
    })
}

/// Unmasked single-segment input `[CLS] text [SEP]`, truncated to `max_len`.
pub fn single_segment(text: &str, vocab: &Vocab, max_len: usize) -> (Vec<usize>, Vec<usize>, Vec<Option<char>>) {
    let body: Vec<char> = text.chars().take(max_len.saturating_sub(2)).collect();
    let mut ids = vec![CLS];
    let mut chars = vec![None];
    for &c in &body {
        ids.push(vocab.id(c));
        chars.push(Some(c));
    }
    ids.push(SEP);
    chars.push(None);
    let segs = vec![0; ids.len()];
    (ids, segs, chars)
}

/// Unmasked pair input `[CLS] a [SEP] b [SEP]`.
pub fn pair_segments(
    a: &str,
    b: &str,
    vocab: &Vocab,
    max_len: usize,
) -> (Vec<usize>, Vec<usize>, Vec<Option<char>>) {
    let mut ac: Vec<char> = a.chars().collect();
    let mut bc: Vec<char> = b.chars().collect();
    truncate_pair(&mut ac, &mut bc, max_len);
    let mut ids = vec![CLS];
    let mut segs = vec![0];
    let mut chars = vec![None];
    for &c in &ac {
        ids.push(vocab.id(c));
        segs.push(0);
        chars.push(Some(c));
    }
    ids.push(SEP);
    segs.push(0);
    chars.push(None);
    for &c in &bc {
        ids.push(vocab.id(c));
        segs.push(1);
        chars.push(Some(c));
    }
    ids.push(SEP);
    segs.push(1);
    chars.push(None);
    (ids, segs, chars)
}
