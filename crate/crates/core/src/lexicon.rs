//! Frequency-thresholded n-gram lexicon.
//!
//! Extraction counts every contiguous character n-gram (overlapping
//! occurrences included) within each line, then keeps those whose count
//! reaches the threshold. N-grams never span line boundaries. Ids follow
//! descending frequency, ties broken by codepoint order.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::thread;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_N_MAX: usize = 8;
const HEADER_TAG: &str = "#zen-lexicon v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexiconEntry {
    pub ngram: String,
    pub freq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NgramLexicon {
    entries: Vec<LexiconEntry>,
    index: HashMap<String, usize>,
    n_min: usize,
    n_max: usize,
    threshold: u64,
}

pub type NgramCounts = HashMap<String, u64>;

fn check_bounds(n_min: usize, n_max: usize, threshold: u64) -> Result<()> {
    if n_min < 2 || n_max < n_min {
        return Err(Error::invalid(format!(
            "n-gram bounds must satisfy 2 <= n_min <= n_max (got {n_min}..={n_max})"
        )));
    }
    if threshold < 1 {
        return Err(Error::invalid("threshold must be at least 1"));
    }
    Ok(())
}

/// First pass: occurrence counts of all n-grams with length in
/// `[n_min, n_max]`.
pub fn count_ngrams<I, S>(lines: I, n_min: usize, n_max: usize) -> NgramCounts
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts = NgramCounts::new();
    let mut bounds = Vec::new();
    for line in lines {
        let line = line.as_ref();
        bounds.clear();
        bounds.extend(line.char_indices().map(|(b, _)| b));
        bounds.push(line.len());
        let len = bounds.len() - 1;
        for start in 0..len {
            for n in n_min..=n_max.min(len - start) {
                let s = &line[bounds[start]..bounds[start + n]];
                match counts.get_mut(s) {
                    Some(c) => *c += 1,
                    None => {
                        counts.insert(s.to_owned(), 1);
                    }
                }
            }
        }
    }
    counts
}

pub fn merge_counts(into: &mut NgramCounts, other: NgramCounts) {
    for (k, v) in other {
        *into.entry(k).or_default() += v;
    }
}

impl NgramLexicon {
    pub fn empty(n_min: usize, n_max: usize, threshold: u64) -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
            n_min,
            n_max,
            threshold,
        }
    }

    /// Second pass: filter counts by threshold and assign ids.
    pub fn from_counts(counts: NgramCounts, n_min: usize, n_max: usize, threshold: u64) -> Result<Self> {
        check_bounds(n_min, n_max, threshold)?;
        let mut kept: Vec<LexiconEntry> = counts
            .into_iter()
            .filter(|(g, f)| *f >= threshold && (n_min..=n_max).contains(&g.chars().count()))
            .map(|(ngram, freq)| LexiconEntry { ngram, freq })
            .collect();
        kept.sort_by(|a, b| b.freq.cmp(&a.freq).then_with(|| a.ngram.cmp(&b.ngram)));
        Self::from_entries(kept, n_min, n_max, threshold)
    }

    /// Lexicon with explicit entries in id order, validated against the
    /// bounds and threshold.
    pub fn from_entries(entries: Vec<LexiconEntry>, n_min: usize, n_max: usize, threshold: u64) -> Result<Self> {
        check_bounds(n_min, n_max, threshold)?;
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            validate_entry(e, n_min, n_max, threshold)?;
            if index.insert(e.ngram.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate n-gram {:?}", e.ngram)));
            }
        }
        Ok(Self {
            entries,
            index,
            n_min,
            n_max,
            threshold,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_min(&self) -> usize {
        self.n_min
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn entry(&self, id: usize) -> &LexiconEntry {
        &self.entries[id]
    }

    pub fn id(&self, ngram: &str) -> Option<usize> {
        self.index.get(ngram).copied()
    }

    /// Entry counts grouped by n-gram character length.
    pub fn size_by_length(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for e in &self.entries {
            *h.entry(e.ngram.chars().count()).or_default() += 1;
        }
        h
    }

    pub fn to_file_string(&self) -> String {
        let mut s = format!(
            "{HEADER_TAG} n_min={} n_max={} threshold={}\n",
            self.n_min, self.n_max, self.threshold
        );
        for e in &self.entries {
            s.push_str(&e.ngram);
            s.push('\t');
            s.push_str(&e.freq.to_string());
            s.push('\n');
        }
        s
    }

    /// SHA-256 of the serialized lexicon, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_file_string().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
        let (n_min, n_max, threshold) = parse_header(header).map_err(|m| err(1, m))?;
        check_bounds(n_min, n_max, threshold).map_err(|e| err(1, e.to_string()))?;
        let mut entries = Vec::new();
        let mut index = HashMap::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(err(lineno, format!("expected 2 tab-separated fields, got {}", fields.len())));
            }
            let freq: u64 = fields[1]
                .parse()
                .map_err(|_| err(lineno, format!("frequency {:?} is not an integer", fields[1])))?;
            let e = LexiconEntry {
                ngram: fields[0].to_string(),
                freq,
            };
            validate_entry(&e, n_min, n_max, threshold).map_err(|e| err(lineno, e.to_string()))?;
            if index.insert(e.ngram.clone(), entries.len()).is_some() {
                return Err(err(lineno, format!("duplicate n-gram {:?}", e.ngram)));
            }
            entries.push(e);
        }
        Ok(Self {
            entries,
            index,
            n_min,
            n_max,
            threshold,
        })
    }
}

fn validate_entry(e: &LexiconEntry, n_min: usize, n_max: usize, threshold: u64) -> Result<()> {
    let n = e.ngram.chars().count();
    if !(n_min..=n_max).contains(&n) {
        return Err(Error::invalid(format!(
            "n-gram {:?} has length {n}, outside [{n_min}, {n_max}]",
            e.ngram
        )));
    }
    if e.freq < threshold {
        return Err(Error::invalid(format!(
            "n-gram {:?} has frequency {} below threshold {threshold}",
            e.ngram, e.freq
        )));
    }
    Ok(())
}

fn parse_header(line: &str) -> std::result::Result<(usize, usize, u64), String> {
    let rest = line
        .strip_prefix(HEADER_TAG)
        .ok_or_else(|| format!("header must start with {HEADER_TAG:?}"))?;
    let (mut n_min, mut n_max, mut threshold) = (None, None, None);
    for kv in rest.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("bad header field {kv:?}"))?;
        let bad = |_| format!("bad header value {kv:?}");
        match k {
            "n_min" => n_min = Some(v.parse::<usize>().map_err(bad)?),
            "n_max" => n_max = Some(v.parse::<usize>().map_err(bad)?),
            "threshold" => threshold = Some(v.parse::<u64>().map_err(bad)?),
            _ => return Err(format!("unknown header field {k:?}")),
        }
    }
    match (n_min, n_max, threshold) {
        (Some(a), Some(b), Some(c)) => Ok((a, b, c)),
        _ => Err("header needs n_min, n_max and threshold".into()),
    }
}

/// Extract a lexicon from normalized lines.
pub fn extract<I, S>(lines: I, n_min: usize, n_max: usize, threshold: u64) -> Result<NgramLexicon>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    check_bounds(n_min, n_max, threshold)?;
    NgramLexicon::from_counts(count_ngrams(lines, n_min, n_max), n_min, n_max, threshold)
}

/// [`extract`] with the counting pass sharded across `workers` threads.
/// The merged result equals single-worker output exactly.
pub fn extract_sharded(lines: &[String], n_min: usize, n_max: usize, threshold: u64, workers: usize) -> Result<NgramLexicon> {
    check_bounds(n_min, n_max, threshold)?;
    let workers = workers.max(1);
    let chunk = lines.len().div_ceil(workers).max(1);
    let partials: Vec<NgramCounts> = thread::scope(|s| {
        let handles: Vec<_> = lines
            .chunks(chunk)
            .map(|shard| s.spawn(move || count_ngrams(shard, n_min, n_max)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("counting thread panicked")).collect()
    });
    let mut counts = NgramCounts::new();
    for p in partials {
        merge_counts(&mut counts, p);
    }
    NgramLexicon::from_counts(counts, n_min, n_max, threshold)
}
