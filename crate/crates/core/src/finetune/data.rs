//! Task examples and their TSV formats.
//!
//! Tagging: `char<TAB>label` per line, blank line between sentences.
//! Classification: `label<TAB>text_a[<TAB>text_b]` per line.

use std::fs;
use std::path::Path;

use rand::Rng;

use super::spans::Scheme;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggingExample {
    pub chars: Vec<char>,
    pub labels: Vec<String>,
}

impl TaggingExample {
    pub fn new(chars: Vec<char>, labels: Vec<String>) -> Result<Self> {
        if chars.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} characters but {} labels",
                chars.len(),
                labels.len()
            )));
        }
        Ok(Self { chars, labels })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassificationExample {
    pub text_a: String,
    pub text_b: Option<String>,
    pub label: usize,
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

pub fn parse_tagging(text: &str, source: &str) -> Result<Vec<TaggingExample>> {
    let mut out = Vec::new();
    let (mut chars, mut labels) = (Vec::new(), Vec::new());
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !chars.is_empty() {
                out.push(TaggingExample::new(std::mem::take(&mut chars), std::mem::take(&mut labels))?);
            }
            continue;
        }
        let (c, l) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(source, i + 1, "expected char<TAB>label"))?;
        let mut cs = c.chars();
        let (Some(ch), None) = (cs.next(), cs.next()) else {
            return Err(parse_err(source, i + 1, format!("expected a single character, got {c:?}")));
        };
        if l.is_empty() || l.contains('\t') {
            return Err(parse_err(source, i + 1, "expected exactly one label"));
        }
        chars.push(ch);
        labels.push(l.to_string());
    }
    if !chars.is_empty() {
        out.push(TaggingExample::new(chars, labels)?);
    }
    Ok(out)
}

pub fn load_tagging(path: &Path) -> Result<Vec<TaggingExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tagging(&text, &path.display().to_string())
}

pub fn tagging_to_tsv(examples: &[TaggingExample]) -> String {
    let mut s = String::new();
    for (k, ex) in examples.iter().enumerate() {
        if k > 0 {
            s.push('\n');
        }
        for (c, l) in ex.chars.iter().zip(&ex.labels) {
            s.push(*c);
            s.push('\t');
            s.push_str(l);
            s.push('\n');
        }
    }
    s
}

/// Parse classification rows; labels are resolved against `labels`.
pub fn parse_classification(text: &str, source: &str, labels: &[String]) -> Result<Vec<ClassificationExample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(source, i + 1, "expected label<TAB>text_a[<TAB>text_b]"));
        }
        let label = labels.iter().position(|l| l == fields[0]).ok_or(Error::UnknownLabel {
            index: out.len(),
            label: fields[0].to_string(),
        })?;
        out.push(ClassificationExample {
            text_a: fields[1].to_string(),
            text_b: fields.get(2).map(|s| s.to_string()),
            label,
        });
    }
    Ok(out)
}

pub fn load_classification(path: &Path, labels: &[String]) -> Result<Vec<ClassificationExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_classification(&text, &path.display().to_string(), labels)
}

/// Labels of a classification file in order of first appearance.
pub fn classification_labels(text: &str) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for line in text.lines() {
        if let Some(l) = line.split('\t').next().filter(|l| !l.trim().is_empty()) {
            if !labels.iter().any(|x| x == l) {
                labels.push(l.to_string());
            }
        }
    }
    labels
}

/// Closed label set of a tagging scheme over the given entity types
/// (an empty type list gives bare prefixes).
pub fn scheme_labels(scheme: Scheme, types: &[&str]) -> Vec<String> {
    let mut out = Vec::new();
    if scheme == Scheme::Bio {
        out.push("O".to_string());
    }
    let typed: Vec<char> = scheme.prefixes().iter().copied().filter(|&p| p != 'O').collect();
    if types.is_empty() {
        out.extend(typed.iter().map(|p| p.to_string()));
    } else {
        for t in types {
            out.extend(typed.iter().map(|p| format!("{p}-{t}")));
        }
    }
    out
}

/// BMES labels for a segmented sentence.
pub fn bmes_labels<S: AsRef<str>>(words: &[S]) -> TaggingExample {
    let mut chars = Vec::new();
    let mut labels = Vec::new();
    for w in words {
        let cs: Vec<char> = w.as_ref().chars().collect();
        for (i, &c) in cs.iter().enumerate() {
            chars.push(c);
            labels.push(
                match (cs.len(), i) {
                    (1, _) => "S",
                    (_, 0) => "B",
                    (n, i) if i + 1 == n => "E",
                    _ => "M",
                }
                .to_string(),
            );
        }
    }
    TaggingExample { chars, labels }
}

/// Segmentation examples whose words are drawn uniformly from `words`.
pub fn synthetic_segmentation<R: Rng + ?Sized>(
    words: &[String],
    count: usize,
    min_words: usize,
    max_words: usize,
    rng: &mut R,
) -> Vec<TaggingExample> {
    crate::pretrain::synthetic::phrase_sentences(words, count, min_words, max_words, rng)
        .iter()
        .map(|s| bmes_labels(s))
        .collect()
}
