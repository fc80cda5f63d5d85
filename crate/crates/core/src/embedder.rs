//! Deterministic text embedder shared by clustering and routing.
//!
//! Pipeline:
//! 1. lowercase the text;
//! 2. take character n-grams of length `ngram_size` (a non-empty text shorter
//!    than that is a single gram);
//! 3. hash each gram's UTF-8 bytes with 64-bit FNV-1a into `hash_buckets`
//!    buckets (`hash % buckets`);
//! 4. weight each bucket's count sublinearly, `1 + ln(tf)`;
//! 5. project with a fixed `dimension × hash_buckets` sign matrix with entries
//!    `±1/sqrt(dimension)`. Column `j` is generated from 64-bit words
//!    `splitmix64(splitmix64(projection_seed) ^ (j * words_per_column + w))`;
//!    bit `i % 64` of word `i / 64` set means `+`;
//! 6. L2-normalize.
//!
//! Accumulation runs in f64 over buckets in ascending order, so the output
//! only depends on IEEE semantics, never on platform or thread count.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::hashing::{fnv1a64, splitmix64};

pub const EMB_MAGIC: &[u8; 8] = b"MOIN-EMB";
pub const EMB_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub dimension: usize,
    pub ngram_size: usize,
    pub hash_buckets: usize,
    pub projection_seed: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            dimension: 64,
            ngram_size: 3,
            hash_buckets: 4096,
            projection_seed: 0,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension < 2 {
            return Err(Error::InvalidConfig("embedding dimension must be >= 2".into()));
        }
        if self.hash_buckets < self.dimension {
            return Err(Error::InvalidConfig(
                "hash_buckets must be >= dimension".into(),
            ));
        }
        if self.ngram_size == 0 {
            return Err(Error::InvalidConfig("ngram_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    degenerate: bool,
}

impl EmbeddingVector {
    /// Wraps raw values. Callers are responsible for normalization.
    pub fn from_values(values: Vec<f32>) -> Self {
        let degenerate = values.iter().all(|&v| v == 0.0);
        Self { values, degenerate }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            degenerate: true,
        }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// True for the all-zero vector produced from empty text.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }
}

fn grams(text: &str, n: usize) -> Vec<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() < n {
        return vec![chars.into_iter().collect()];
    }
    chars.windows(n).map(|w| w.iter().collect()).collect()
}

fn column_words(seed_mix: u64, column: usize, words: usize) -> impl Iterator<Item = u64> {
    (0..words).map(move |w| splitmix64(seed_mix ^ (column as u64 * words as u64 + w as u64)))
}

pub fn embed(text: &str, config: &EmbedderConfig) -> EmbeddingVector {
    let dim = config.dimension;
    let mut tf: BTreeMap<usize, u32> = BTreeMap::new();
    for g in grams(text, config.ngram_size) {
        let bucket = (fnv1a64(g.as_bytes()) % config.hash_buckets as u64) as usize;
        *tf.entry(bucket).or_default() += 1;
    }
    if tf.is_empty() {
        return EmbeddingVector::zero(dim);
    }

    let scale = 1.0 / (dim as f64).sqrt();
    let seed_mix = splitmix64(config.projection_seed);
    let words = dim.div_ceil(64);
    let mut acc = vec![0.0f64; dim];
    for (&bucket, &count) in &tf {
        let weight = (1.0 + f64::from(count).ln()) * scale;
        for (w, bits) in column_words(seed_mix, bucket, words).enumerate() {
            let rows = (w * 64)..((w + 1) * 64).min(dim);
            for i in rows {
                if (bits >> (i % 64)) & 1 == 1 {
                    acc[i] += weight;
                } else {
                    acc[i] -= weight;
                }
            }
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return EmbeddingVector::zero(dim);
    }
    EmbeddingVector {
        values: acc.iter().map(|v| (v / norm) as f32).collect(),
        degenerate: false,
    }
}

/// Order-preserving, elementwise [`embed`].
pub fn embed_batch<S: AsRef<str> + Sync>(texts: &[S], config: &EmbedderConfig) -> Vec<EmbeddingVector> {
    texts.par_iter().map(|t| embed(t.as_ref(), config)).collect()
}

/// Header `MOIN-EMB`, version, count u64, dim u32, then row-major f32 LE.
pub fn save_embeddings(vectors: &[EmbeddingVector], dim: usize, path: &Path) -> Result<()> {
    if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.dim(),
        });
    }
    binio::write_atomic(path, |w| {
        w.magic(EMB_MAGIC, EMB_VERSION)?;
        w.u64(vectors.len() as u64)?;
        w.u32(dim as u32)?;
        for v in vectors {
            w.f32s(v.values.iter().copied())?;
        }
        Ok(())
    })
}

pub fn read_embeddings(r: impl Read) -> Result<Vec<EmbeddingVector>> {
    let mut r = Reader::new(r);
    r.magic(EMB_MAGIC, EMB_VERSION)?;
    let count = r.u64("count")? as usize;
    let dim = r.u32("dim")? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let values = r.f32s(dim, &format!("embedding {i}"))?;
        out.push(EmbeddingVector::from_values(values));
    }
    r.expect_eof()?;
    Ok(out)
}

pub fn load_embeddings(path: &Path) -> Result<Vec<EmbeddingVector>> {
    read_embeddings(binio::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic() {
        let c = EmbedderConfig::default();
        assert_eq!(embed("hello world", &c), embed("hello world", &c));
    }

    #[test]
    fn empty_is_degenerate_zero() {
        let v = embed("", &EmbedderConfig::default());
        assert!(v.is_degenerate());
        assert_eq!(v.dim(), 64);
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn short_text_is_one_gram() {
        let c = EmbedderConfig::default();
        let v = embed("ab", &c);
        assert!(!v.is_degenerate());
        assert_eq!(embed("AB", &c), v);
    }

    #[test]
    fn projection_is_pm_scaled() {
        // A single gram touches exactly one column, so every coordinate has
        // the same magnitude before and after normalization.
        let c = EmbedderConfig::default();
        let v = embed("abc", &c);
        let expect = 1.0 / (c.dimension as f32).sqrt();
        for &x in v.values() {
            assert!((x.abs() - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_configs() {
        let c = EmbedderConfig {
            dimension: 1,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = EmbedderConfig {
            hash_buckets: 10,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = EmbedderConfig {
            ngram_size: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn dimension_above_64_uses_multiple_words() {
        let c = EmbedderConfig {
            dimension: 100,
            ..Default::default()
        };
        let v = embed("some text here", &c);
        assert_eq!(v.dim(), 100);
        assert!((v.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn batch_matches_elementwise() {
        let c = EmbedderConfig::default();
        let empty: Vec<&str> = vec![];
        assert!(embed_batch(&empty, &c).is_empty());
        let b = embed_batch(&["a", "b"], &c);
        assert_eq!(b, vec![embed("a", &c), embed("b", &c)]);
    }

    #[test]
    fn file_round_trip_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.emb");
        let c = EmbedderConfig::default();
        let vs = embed_batch(&["x y z", "", "hello"], &c);
        save_embeddings(&vs, 64, &p).unwrap();
        assert_eq!(load_embeddings(&p).unwrap(), vs);
        let bytes = std::fs::read(&p).unwrap();
        assert!(matches!(
            read_embeddings(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(read_embeddings(&b"NOTMAGIC"[..]), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn unit_norm(s in "\\PC{1,200}") {
            let v = embed(&s, &EmbedderConfig::default());
            prop_assert!(!v.is_degenerate());
            prop_assert!((v.norm() - 1.0).abs() < 1e-6);
        }
    }
}
