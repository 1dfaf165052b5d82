//! Span decoding for BMES / BIO label sequences and span-level scoring.
//!
//! Labels are `P` or `P-type` where `P` is the scheme prefix. Decoding is
//! total; invalid transitions are repaired as follows:
//!
//! * BMES: `M` or `E` that does not continue an open span of the same type
//!   is read as `B` or `S` respectively. `B`, `S` and `O`-like labels close
//!   any open span just before them; a span still open at the end of the
//!   sequence closes there.
//! * BIO: `I` that does not continue an open span of the same type is read
//!   as `B`; `B` and `O` close any open span.
//!
//! Unknown prefixes behave like `O`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Bmes,
    Bio,
}

impl Scheme {
    /// Label assigned to characters the model never saw (truncated tails).
    pub fn outside_label(self) -> &'static str {
        match self {
            Scheme::Bmes => "S",
            Scheme::Bio => "O",
        }
    }

    pub fn prefixes(self) -> &'static [char] {
        match self {
            Scheme::Bmes => &['B', 'M', 'E', 'S'],
            Scheme::Bio => &['B', 'I', 'O'],
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Bmes => "bmes",
            Scheme::Bio => "bio",
        })
    }
}

/// Half-open character span `[start, end)` with an optional type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub kind: String,
}

/// Split `P-type` into `('P', "type")`; a bare `P` has an empty type.
pub fn split_label(label: &str) -> (char, &str) {
    let mut chars = label.chars();
    let p = chars.next().unwrap_or('O');
    let rest = chars.as_str();
    (p, rest.strip_prefix('-').unwrap_or(rest))
}

pub fn decode_spans<S: AsRef<str>>(scheme: Scheme, labels: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    let close = |open: &mut Option<(usize, &str)>, end: usize, spans: &mut Vec<Span>| {
        if let Some((start, kind)) = open.take() {
            spans.push(Span {
                start,
                end,
                kind: kind.to_string(),
            });
        }
    };
    for (i, l) in labels.iter().enumerate() {
        let (p, kind) = split_label(l.as_ref());
        let continues = matches!(open, Some((_, k)) if k == kind);
        match (scheme, p) {
            (Scheme::Bmes, 'M') | (Scheme::Bio, 'I') if continues => {}
            (Scheme::Bmes, 'E') if continues => close(&mut open, i + 1, &mut spans),
            (Scheme::Bmes, 'B' | 'M') | (Scheme::Bio, 'B' | 'I') => {
                close(&mut open, i, &mut spans);
                open = Some((i, kind));
            }
            (Scheme::Bmes, 'S' | 'E') => {
                close(&mut open, i, &mut spans);
                spans.push(Span {
                    start: i,
                    end: i + 1,
                    kind: kind.to_string(),
                });
            }
            _ => close(&mut open, i, &mut spans),
        }
    }
    close(&mut open, labels.len(), &mut spans);
    spans
}

/// First position whose label is not a valid continuation of its
/// predecessor under `scheme`, if any.
pub fn first_invalid_transition<S: AsRef<str>>(scheme: Scheme, labels: &[S]) -> Option<usize> {
    let mut open: Option<&str> = None;
    for (i, l) in labels.iter().enumerate() {
        let (p, kind) = split_label(l.as_ref());
        let ok = match (scheme, p) {
            (Scheme::Bmes, 'M') => open == Some(kind),
            (Scheme::Bmes, 'E') => open == Some(kind),
            (Scheme::Bmes, 'B' | 'S') => open.is_none(),
            (Scheme::Bio, 'I') => open == Some(kind),
            (Scheme::Bio, 'B' | 'O') => true,
            _ => false,
        };
        if !ok {
            return Some(i);
        }
        open = match (scheme, p) {
            (Scheme::Bmes, 'B' | 'M') | (Scheme::Bio, 'B' | 'I') => Some(kind),
            _ => None,
        };
    }
    if scheme == Scheme::Bmes && open.is_some() {
        return Some(labels.len());
    }
    None
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SpanScore {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl SpanScore {
    pub fn add(&mut self, gold: &[Span], predicted: &[Span]) {
        let g: HashSet<&Span> = gold.iter().collect();
        self.gold += gold.len();
        self.predicted += predicted.len();
        self.correct += predicted.iter().collect::<HashSet<_>>().intersection(&g).count();
    }

    /// `correct / predicted`; 1 when nothing was predicted and nothing was
    /// expected, 0 when nothing was predicted but spans were expected.
    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.predicted, self.gold == 0)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold, self.predicted == 0)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(num: usize, den: usize, vacuous: bool) -> f64 {
    if den == 0 {
        if vacuous {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}
