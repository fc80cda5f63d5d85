//! Planted-topic corpus generator.
//!
//! Each topic owns a pool of invented words; documents draw most of their
//! words from their topic's pool (Zipf-weighted) and the rest from a small
//! shared pool of function words. The planted labels and pools are kept so
//! clustering, keyword extraction and routing can be checked against them.

use std::collections::{HashMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Document, McItem, Split};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;

pub const SHARED_WORDS: &[&str] = &[
    "the", "of", "and", "to", "a", "in", "is", "it", "that", "for", "with", "as", "on", "by",
    "this", "from", "at", "or", "an", "be", "are", "was", "but", "not",
];

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwz";
const VOWELS: &[u8] = b"aeiou";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_topics: usize,
    pub docs_per_topic: usize,
    pub vocab_per_topic: usize,
    pub seed: u64,
    pub min_words: usize,
    pub max_words: usize,
    /// Probability that a word comes from the shared pool.
    pub shared_fraction: f64,
}

impl SyntheticConfig {
    pub fn new(num_topics: usize, docs_per_topic: usize, vocab_per_topic: usize, seed: u64) -> Self {
        Self {
            num_topics,
            docs_per_topic,
            vocab_per_topic,
            seed,
            min_words: 40,
            max_words: 80,
            shared_fraction: 0.3,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_topics == 0 || self.docs_per_topic == 0 || self.vocab_per_topic == 0 {
            return Err(Error::InvalidConfig(
                "synthetic corpus sizes must all be >= 1".into(),
            ));
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return Err(Error::InvalidConfig("need 1 <= min_words <= max_words".into()));
        }
        if !(0.0..1.0).contains(&self.shared_fraction) {
            return Err(Error::InvalidConfig("shared_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    pub corpus: Corpus,
    /// Planted topic per doc_id.
    pub labels: HashMap<u64, usize>,
    pub topic_pools: Vec<Vec<String>>,
    pub shared_pool: Vec<String>,
}

/// Generates the train split of a planted-topic corpus. Deterministic in `seed`.
pub fn make_synthetic_corpus(
    num_topics: usize,
    docs_per_topic: usize,
    vocab_per_topic: usize,
    seed: u64,
) -> Result<SyntheticCorpus> {
    SyntheticCorpus::generate(SyntheticConfig::new(
        num_topics,
        docs_per_topic,
        vocab_per_topic,
        seed,
    ))
}

/// Word shape depends only on its Zipf rank, so every topic has the same
/// length profile and no topic is intrinsically easier to model.
fn invent_word(rank: usize, rng: &mut ChaCha8Rng) -> String {
    let syllables = 2 + rank % 2;
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
    }
    if (rank / 2) % 2 == 1 {
        w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
    }
    w
}

struct WordSampler<'a> {
    pools: &'a [Vec<String>],
    shared: &'a [String],
    zipf: WeightedIndex<f64>,
    shared_fraction: f64,
}

impl<'a> WordSampler<'a> {
    fn words(&self, topic: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<&'a str> {
        (0..n)
            .map(|_| {
                if rng.random_bool(self.shared_fraction) {
                    self.shared[rng.random_range(0..self.shared.len())].as_str()
                } else {
                    self.pools[topic][self.zipf.sample(rng)].as_str()
                }
            })
            .collect()
    }
}

impl SyntheticCorpus {
    pub fn generate(config: SyntheticConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0));
        let shared_pool: Vec<String> = SHARED_WORDS.iter().map(|s| s.to_string()).collect();
        let mut used: HashSet<String> = shared_pool.iter().cloned().collect();
        let mut topic_pools = Vec::with_capacity(config.num_topics);
        for _ in 0..config.num_topics {
            let mut pool = Vec::with_capacity(config.vocab_per_topic);
            while pool.len() < config.vocab_per_topic {
                let w = invent_word(pool.len(), &mut rng);
                if used.insert(w.clone()) {
                    pool.push(w);
                }
            }
            topic_pools.push(pool);
        }
        let mut out = Self {
            corpus: Corpus::new(vec![Document::new(0, "")], Split::Train)?,
            labels: HashMap::new(),
            topic_pools,
            shared_pool,
            config,
        };
        let (docs, labels) = out.documents(out.config.docs_per_topic, 0, 1);
        out.corpus = Corpus::new(docs, Split::Train)?;
        out.labels = labels;
        Ok(out)
    }

    fn sampler(&self) -> WordSampler<'_> {
        let weights: Vec<f64> = (0..self.config.vocab_per_topic)
            .map(|r| 1.0 / (r as f64 + 1.0).powf(0.8))
            .collect();
        WordSampler {
            pools: &self.topic_pools,
            shared: &self.shared_pool,
            zipf: WeightedIndex::new(weights).expect("positive weights"),
            shared_fraction: self.config.shared_fraction,
        }
    }

    /// Documents interleave topics: doc `first_id + i` has topic `i % num_topics`.
    fn documents(
        &self,
        docs_per_topic: usize,
        first_id: u64,
        stream: u64,
    ) -> (Vec<Document>, HashMap<u64, usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, stream));
        let sampler = self.sampler();
        let n = docs_per_topic * self.config.num_topics;
        let mut docs = Vec::with_capacity(n);
        let mut labels = HashMap::with_capacity(n);
        for i in 0..n {
            let topic = i % self.config.num_topics;
            let len = rng.random_range(self.config.min_words..=self.config.max_words);
            let text = sampler.words(topic, len, &mut rng).join(" ");
            let id = first_id + i as u64;
            docs.push(Document::new(id, text));
            labels.insert(id, topic);
        }
        (docs, labels)
    }

    pub fn label_of(&self, doc_id: u64) -> Option<usize> {
        self.labels.get(&doc_id).copied()
    }

    /// Held-out documents from the same pools, with ids after the train split.
    pub fn validation(&self, docs_per_topic: usize) -> Result<(Corpus, HashMap<u64, usize>)> {
        let first = self.corpus.len() as u64;
        let (docs, labels) = self.documents(docs_per_topic, first, 2);
        Ok((Corpus::new(docs, Split::Validation)?, labels))
    }

    /// Multiple-choice items: the prompt is a topic passage, the gold option
    /// continues it with the same topic's words and distractors use other
    /// topics' words. With a single topic every option shares the pool.
    pub fn mc_items(&self, n_items: usize, n_options: usize, seed: u64) -> Vec<McItem> {
        let n_options = n_options.max(2);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed ^ seed, 3));
        let sampler = self.sampler();
        let t = self.config.num_topics;
        (0..n_items)
            .map(|i| {
                let topic = i % t;
                let prompt = sampler.words(topic, 24, &mut rng).join(" ");
                let gold_index = rng.random_range(0..n_options);
                let options = (0..n_options)
                    .map(|o| {
                        let src = if o == gold_index || t == 1 {
                            topic
                        } else {
                            (topic + 1 + rng.random_range(0..t - 1)) % t
                        };
                        let mut s = String::from(" ");
                        s.push_str(&sampler.words(src, 6, &mut rng).join(" "));
                        s
                    })
                    .collect();
                McItem {
                    item_id: i as u64,
                    prompt,
                    options,
                    gold_index,
                }
            })
            .collect()
    }
}
