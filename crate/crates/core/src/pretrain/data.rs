//! Sentence pairs and the epoch-structured instance stream.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{make_instance, Corpus, PretrainInstance, Vocab};
use crate::error::{Error, Result};
use crate::seeds::rng_for;

/// A positive pair: `b` directly follows `a` in its document. Single-sentence
/// documents contribute their two halves as a pair.
#[derive(Clone, Debug, PartialEq, Eq)]
struct PairCandidate {
    a: String,
    b: String,
    /// Global index of the true successor sentence, when `b` is one.
    successor: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct PairSource {
    sentences: Vec<String>,
    candidates: Vec<PairCandidate>,
}

impl PairSource {
    pub fn new(corpus: &Corpus) -> Result<Self> {
        let sentences: Vec<String> = corpus.sentences().map(str::to_owned).collect();
        let mut candidates = Vec::new();
        let mut base = 0;
        for doc in &corpus.documents {
            if doc.len() == 1 {
                let chars: Vec<char> = doc[0].chars().collect();
                if chars.len() >= 2 {
                    let mid = chars.len() / 2;
                    candidates.push(PairCandidate {
                        a: chars[..mid].iter().collect(),
                        b: chars[mid..].iter().collect(),
                        successor: None,
                    });
                }
            } else {
                for i in 0..doc.len() - 1 {
                    candidates.push(PairCandidate {
                        a: doc[i].clone(),
                        b: doc[i + 1].clone(),
                        successor: Some(base + i + 1),
                    });
                }
            }
            base += doc.len();
        }
        if candidates.is_empty() {
            return Err(Error::invalid("corpus yields no sentence pairs"));
        }
        Ok(Self { sentences, candidates })
    }

    pub fn pairs_per_epoch(&self) -> usize {
        self.candidates.len()
    }

    /// With probability 0.5 the second segment is replaced by a uniformly
    /// random corpus sentence other than the true successor.
    fn draw<R: Rng + ?Sized>(&self, idx: usize, rng: &mut R) -> (String, String, bool) {
        let c = &self.candidates[idx];
        let negative = rng.gen_bool(0.5);
        let pool = self.sentences.len() - usize::from(c.successor.is_some());
        if !negative || pool == 0 {
            return (c.a.clone(), c.b.clone(), true);
        }
        let mut k = rng.gen_range(0..pool);
        if let Some(s) = c.successor {
            if k >= s {
                k += 1;
            }
        }
        (c.a.clone(), self.sentences[k].clone(), false)
    }
}

/// Endless, seeded stream of masked instances. Epoch `e` is a pure function
/// of `(seed, e)`: a shuffle of the pair candidates, fresh negative samples
/// and fresh masks.
#[derive(Clone, Debug)]
pub struct InstanceStream {
    source: PairSource,
    vocab: Vocab,
    seed: u64,
    mask_rate: f64,
    max_len: usize,
    cached: Option<(usize, Vec<PretrainInstance>)>,
}

impl InstanceStream {
    pub fn new(corpus: &Corpus, vocab: Vocab, seed: u64, mask_rate: f64, max_len: usize) -> Result<Self> {
        Ok(Self {
            source: PairSource::new(corpus)?,
            vocab,
            seed,
            mask_rate,
            max_len,
            cached: None,
        })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn pairs_per_epoch(&self) -> usize {
        self.source.pairs_per_epoch()
    }

    pub fn epoch(&self, epoch: usize) -> Result<Vec<PretrainInstance>> {
        let mut rng = rng_for(self.seed, "epoch", epoch as u64);
        let mut order: Vec<usize> = (0..self.source.pairs_per_epoch()).collect();
        order.shuffle(&mut rng);
        order
            .into_iter()
            .map(|i| {
                let (a, b, is_next) = self.source.draw(i, &mut rng);
                make_instance(&a, &b, is_next, &self.vocab, self.mask_rate, self.max_len, &mut rng)
            })
            .collect()
    }

    /// The `index`-th instance of the stream.
    pub fn get(&mut self, index: usize) -> Result<&PretrainInstance> {
        let per = self.source.pairs_per_epoch();
        let epoch = index / per;
        if self.cached.as_ref().map(|(e, _)| *e) != Some(epoch) {
            self.cached = Some((epoch, self.epoch(epoch)?));
        }
        Ok(&self.cached.as_ref().expect("just filled").1[index % per])
    }

    /// Instances `[step * size, (step + 1) * size)`.
    pub fn batch(&mut self, step: usize, size: usize) -> Result<Vec<PretrainInstance>> {
        (step * size..(step + 1) * size).map(|i| self.get(i).cloned()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Corpus {
        Corpus::parse("今天天气很好\n我们去公园\n公园里人很多\n\n明天下雨\n带上雨伞\n\n单独一句话\n")
    }

    #[test]
    fn candidates_follow_documents() {
        let src = PairSource::new(&corpus()).unwrap();
        // 2 pairs from doc 1, 1 from doc 2, 1 split pair from doc 3.
        assert_eq!(src.pairs_per_epoch(), 4);
        assert_eq!(src.candidates[3].a, "单独");
        assert_eq!(src.candidates[3].b, "一句话");
    }

    #[test]
    fn negatives_exclude_true_successor() {
        let src = PairSource::new(&corpus()).unwrap();
        let mut rng = rng_for(1, "t", 0);
        let mut negatives = 0;
        for _ in 0..2000 {
            let (_, b, next) = src.draw(0, &mut rng);
            if !next {
                negatives += 1;
                assert_ne!(b, "我们去公园");
            }
        }
        assert!((900..1100).contains(&negatives), "{negatives}");
    }

    #[test]
    fn stream_is_deterministic_and_epoch_structured() {
        let c = corpus();
        let v = Vocab::build(c.sentences(), 1);
        let mut s1 = InstanceStream::new(&c, v.clone(), 3, 0.15, 32).unwrap();
        let mut s2 = InstanceStream::new(&c, v, 3, 0.15, 32).unwrap();
        let b1 = s1.batch(5, 3).unwrap();
        assert_eq!(b1, s2.batch(5, 3).unwrap());
        // Random access agrees with sequential access.
        let seq: Vec<_> = (0..18).map(|i| s2.get(i).unwrap().clone()).collect();
        assert_eq!(b1, seq[15..18].to_vec());
    }

    #[test]
    fn single_sentence_corpus_works() {
        let c = Corpus::parse("abcdefgh\n");
        let v = Vocab::build(c.sentences(), 1);
        let mut s = InstanceStream::new(&c, v, 0, 0.15, 32).unwrap();
        let b = s.batch(0, 4).unwrap();
        assert_eq!(b.len(), 4);
        assert!(Corpus::parse("a\n").documents.len() == 1);
        assert!(PairSource::new(&Corpus::parse("a\n")).is_err());
    }
}
