//! Per-instance n-gram matching and the matching matrix.
//!
//! Every lexicon hit is recorded as its own occurrence (one column of the
//! matching matrix per occurrence): a repeated n-gram produces several
//! columns that share one embedding id, and every column's ones are
//! contiguous. Spans never cover special tokens, so they stay inside one
//! segment.

use std::fmt::Write as _;

use crate::lexicon::NgramLexicon;
use crate::numerics::Tensor;

/// Default cap on matched n-grams per instance.
pub const DEFAULT_MAX_NGRAMS: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NgramOccurrence {
    /// Lexicon id (embedding row).
    pub ngram_id: usize,
    pub start: usize,
    pub len: usize,
}

impl NgramOccurrence {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn covers(&self, pos: usize) -> bool {
        self.start <= pos && pos < self.end()
    }
}

/// Occurrences (ordered by start, then length) over an instance of
/// `num_chars` positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchState {
    occurrences: Vec<NgramOccurrence>,
    num_chars: usize,
}

impl MatchState {
    pub fn empty(num_chars: usize) -> Self {
        Self {
            occurrences: Vec::new(),
            num_chars,
        }
    }

    /// State from explicit occurrences; spans must lie within the instance.
    pub fn from_occurrences(num_chars: usize, occurrences: Vec<NgramOccurrence>) -> Self {
        assert!(
            occurrences.iter().all(|o| o.len > 0 && o.end() <= num_chars),
            "occurrence outside instance"
        );
        Self {
            occurrences,
            num_chars,
        }
    }

    pub fn occurrences(&self) -> &[NgramOccurrence] {
        &self.occurrences
    }

    pub fn num_chars(&self) -> usize {
        self.num_chars
    }

    pub fn num_ngrams(&self) -> usize {
        self.occurrences.len()
    }

    pub fn ngram_ids(&self) -> Vec<usize> {
        self.occurrences.iter().map(|o| o.ngram_id).collect()
    }

    pub fn entry(&self, i: usize, j: usize) -> bool {
        self.occurrences[j].covers(i)
    }

    /// Dense `k_c × k_n` 0/1 matching matrix.
    pub fn matrix(&self) -> Tensor {
        let (kc, kn) = (self.num_chars, self.occurrences.len());
        let mut t = Tensor::zeros(&[kc, kn]);
        let data = t.data_mut();
        for (j, o) in self.occurrences.iter().enumerate() {
            for i in o.start..o.end() {
                data[i * kn + j] = 1.0;
            }
        }
        t
    }

    /// Drop every occurrence whose span contains a masked position.
    pub fn exclude_masked(&self, mask_positions: &[usize]) -> MatchState {
        if mask_positions.is_empty() {
            return self.clone();
        }
        let mut masked = vec![false; self.num_chars];
        for &p in mask_positions {
            if p < self.num_chars {
                masked[p] = true;
            }
        }
        MatchState {
            occurrences: self
                .occurrences
                .iter()
                .filter(|o| !masked[o.start..o.end()].iter().any(|&m| m))
                .copied()
                .collect(),
            num_chars: self.num_chars,
        }
    }

    /// Occurrence listing plus the dense matrix, tab separated.
    pub fn debug_dump(&self, lexicon: &NgramLexicon) -> String {
        let mut s = String::from("#occurrences\nid\tstart\tlength\tngram\n");
        for o in &self.occurrences {
            let _ = writeln!(s, "{}\t{}\t{}\t{}", o.ngram_id, o.start, o.len, lexicon.entry(o.ngram_id).ngram);
        }
        let _ = writeln!(s, "#matrix k_c={} k_n={}", self.num_chars, self.occurrences.len());
        for i in 0..self.num_chars {
            let row: Vec<&str> = (0..self.occurrences.len())
                .map(|j| if self.entry(i, j) { "1" } else { "0" })
                .collect();
            s.push_str(&row.join("\t"));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, Default)]
struct TrieNode {
    /// Sorted by character.
    children: Vec<(char, u32)>,
    terminal: Option<usize>,
}

/// Character trie over lexicon entries.
#[derive(Clone, Debug)]
pub struct Matcher<'a> {
    lexicon: &'a NgramLexicon,
    nodes: Vec<TrieNode>,
}

impl<'a> Matcher<'a> {
    pub fn new(lexicon: &'a NgramLexicon) -> Self {
        let mut nodes = vec![TrieNode::default()];
        for (id, e) in lexicon.entries().iter().enumerate() {
            let mut cur = 0usize;
            for c in e.ngram.chars() {
                cur = match nodes[cur].children.binary_search_by_key(&c, |&(k, _)| k) {
                    Ok(k) => nodes[cur].children[k].1 as usize,
                    Err(k) => {
                        let next = nodes.len();
                        nodes.push(TrieNode::default());
                        nodes[cur].children.insert(k, (c, next as u32));
                        next
                    }
                };
            }
            nodes[cur].terminal = Some(id);
        }
        Self { lexicon, nodes }
    }

    pub fn lexicon(&self) -> &NgramLexicon {
        self.lexicon
    }

    fn child(&self, node: usize, c: char) -> Option<usize> {
        let ch = &self.nodes[node].children;
        ch.binary_search_by_key(&c, |&(k, _)| k).ok().map(|k| ch[k].1 as usize)
    }

    /// All lexicon hits in `chars` (`None` marks special tokens), capped at
    /// `max_ngrams` by priority: longer first, then more frequent, then
    /// earlier start.
    pub fn find(&self, chars: &[Option<char>], max_ngrams: usize) -> MatchState {
        let mut hits = Vec::new();
        for start in 0..chars.len() {
            let mut node = 0usize;
            for (off, c) in chars[start..].iter().enumerate() {
                let Some(c) = c else { break };
                match self.child(node, *c) {
                    Some(n) => node = n,
                    None => break,
                }
                if let Some(id) = self.nodes[node].terminal {
                    hits.push(NgramOccurrence {
                        ngram_id: id,
                        start,
                        len: off + 1,
                    });
                }
            }
        }
        if hits.len() > max_ngrams {
            hits.sort_by(|a, b| {
                b.len
                    .cmp(&a.len)
                    .then_with(|| self.lexicon.entry(b.ngram_id).freq.cmp(&self.lexicon.entry(a.ngram_id).freq))
                    .then_with(|| a.start.cmp(&b.start))
            });
            hits.truncate(max_ngrams);
        }
        hits.sort_by_key(|o| (o.start, o.len));
        MatchState {
            occurrences: hits,
            num_chars: chars.len(),
        }
    }
}

/// One-shot matching; builds the trie on every call.
pub fn match_ngrams(chars: &[Option<char>], lexicon: &NgramLexicon, max_ngrams: usize) -> MatchState {
    Matcher::new(lexicon).find(chars, max_ngrams)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{LexiconEntry, NgramLexicon};

    fn lex(entries: &[(&str, u64)]) -> NgramLexicon {
        NgramLexicon::from_entries(
            entries
                .iter()
                .map(|&(g, f)| LexiconEntry {
                    ngram: g.into(),
                    freq: f,
                })
                .collect(),
            2,
            8,
            1,
        )
        .unwrap()
    }

    fn instance(s: &str) -> Vec<Option<char>> {
        let mut v = vec![None];
        v.extend(s.chars().map(Some));
        v.push(None);
        v
    }

    #[test]
    fn abab_matrix() {
        let l = lex(&[("ab", 2)]);
        let st = match_ngrams(&instance("abab"), &l, 128);
        assert_eq!(st.num_ngrams(), 2);
        assert_eq!(st.occurrences()[0].start, 1);
        assert_eq!(st.occurrences()[1].start, 3);
        let m = st.matrix();
        let col = |j: usize| (0..6).map(|i| m.get(i, j)).collect::<Vec<_>>();
        assert_eq!(col(0), [0., 1., 1., 0., 0., 0.]);
        assert_eq!(col(1), [0., 0., 0., 1., 1., 0.]);
    }

    #[test]
    fn empty_lexicon_gives_no_columns() {
        let l = NgramLexicon::empty(2, 8, 1);
        let st = match_ngrams(&instance("abab"), &l, 128);
        assert_eq!(st.num_ngrams(), 0);
        assert_eq!(st.matrix().shape(), &[6, 0]);
    }

    #[test]
    fn spans_stop_at_special_tokens() {
        let l = lex(&[("ab", 1), ("ba", 1)]);
        let mut chars = instance("ab");
        chars.extend(instance("ab").into_iter().skip(1)); // [CLS] a b [SEP] a b [SEP]
        let st = match_ngrams(&chars, &l, 128);
        let starts: Vec<usize> = st.occurrences().iter().map(|o| o.start).collect();
        assert_eq!(starts, [1, 4]);
    }

    #[test]
    fn truncation_keeps_highest_priority() {
        // 200 hits: "aa" (freq 5) at every adjacent pair of a 201-char run
        // would be 200 two-char hits; add a few longer and more frequent ones.
        let l = lex(&[("aaa", 1), ("aa", 5), ("xy", 9)]);
        let text = "aaaaaaaaaaaa".to_string() + &"xy".repeat(100);
        let chars = instance(&text);
        let full = match_ngrams(&chars, &l, usize::MAX);
        assert_eq!(full.num_ngrams(), 10 + 11 + 100);
        let st = match_ngrams(&chars, &l, 20);
        assert_eq!(st.num_ngrams(), 20);
        // All ten 3-grams first, then the ten earliest "xy" (freq 9 beats 5).
        let threes = st.occurrences().iter().filter(|o| o.len == 3).count();
        assert_eq!(threes, 10);
        let xy: Vec<usize> = st.occurrences().iter().filter(|o| o.len == 2).map(|o| o.start).collect();
        assert_eq!(xy, (0..10).map(|k| 13 + 2 * k).collect::<Vec<_>>());
        assert!(st.occurrences().iter().all(|o| l.entry(o.ngram_id).ngram != "aa"));
    }

    #[test]
    fn exclusion_examples() {
        let l = lex(&[("ab", 2)]);
        let st = match_ngrams(&instance("abab"), &l, 128);
        assert_eq!(st.exclude_masked(&[]), st);
        let ex = st.exclude_masked(&[1]);
        assert_eq!(ex.num_ngrams(), 1);
        assert_eq!(ex.occurrences()[0].start, 3);
        let all: Vec<usize> = (0..6).collect();
        assert_eq!(st.exclude_masked(&all).num_ngrams(), 0);
    }

    #[test]
    fn debug_dump_lists_occurrences_and_matrix() {
        let l = lex(&[("ab", 2)]);
        let st = match_ngrams(&instance("abab"), &l, 128);
        let dump = st.debug_dump(&l);
        assert!(dump.contains("0\t1\t2\tab\n0\t3\t2\tab\n"));
        assert!(dump.contains("#matrix k_c=6 k_n=2\n0\t0\n1\t0\n1\t0\n0\t1\n0\t1\n0\t0\n"));
    }
}
