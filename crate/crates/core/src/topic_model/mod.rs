//! Topic model: K-means centroids as topic embeddings, pruning of small
//! topics and class-based TF-IDF keywords.

mod ctfidf;
mod kmeans;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

pub use ctfidf::{ctfidf_keywords, ctfidf_weights, render_keyword_table};
pub use kmeans::{kmeans_fit, KMeansFit, KMeansParams};

use crate::binio::{self, Reader};
use crate::corpus::Corpus;
use crate::embedder::EmbeddingVector;
use crate::error::{Error, Result};

pub const TPC_MAGIC: &[u8; 8] = b"MOIN-TPC";
pub const TPC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub k: usize,
    pub dim: usize,
    /// Row-major `k × dim`.
    pub centroids: Vec<f32>,
    pub doc_counts: Vec<u64>,
    pub retained: Vec<bool>,
    pub keywords: Option<Vec<Vec<String>>>,
    pub kmeans_seed: u64,
}

pub(crate) fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

impl TopicModel {
    pub fn centroid(&self, topic: usize) -> &[f32] {
        &self.centroids[topic * self.dim..(topic + 1) * self.dim]
    }

    pub fn retained_topics(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.k).filter(|&t| self.retained[t])
    }

    pub fn num_retained(&self) -> usize {
        self.retained.iter().filter(|&&r| r).count()
    }

    pub fn keywords_of(&self, topic: usize) -> &[String] {
        self.keywords
            .as_ref()
            .and_then(|k| k.get(topic))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn check_dim(&self, v: &EmbeddingVector) -> Result<()> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.dim(),
            });
        }
        Ok(())
    }

    /// Nearest centroid among `candidates` (ascending topic order), with the
    /// squared Euclidean distance. Ties go to the first candidate.
    pub fn nearest_among(
        &self,
        v: &EmbeddingVector,
        candidates: impl IntoIterator<Item = usize>,
    ) -> Result<Option<(usize, f64)>> {
        self.check_dim(v)?;
        let mut best: Option<(usize, f64)> = None;
        for t in candidates {
            let d = sq_dist(v.values(), self.centroid(t));
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((t, d));
            }
        }
        Ok(best)
    }

    /// Retains exactly the topics with at least `min_docs` documents.
    pub fn prune(&self, min_docs: u64) -> Result<TopicModel> {
        let retained: Vec<bool> = self.doc_counts.iter().map(|&c| c >= min_docs).collect();
        if !retained.iter().any(|&r| r) {
            return Err(Error::NoRetainedTopics);
        }
        Ok(TopicModel {
            retained,
            ..self.clone()
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_atomic(path, |w| {
            w.magic(TPC_MAGIC, TPC_VERSION)?;
            w.u32(self.k as u32)?;
            w.u32(self.dim as u32)?;
            w.u64(self.kmeans_seed)?;
            w.f32s(self.centroids.iter().copied())?;
            for &c in &self.doc_counts {
                w.u64(c)?;
            }
            for &r in &self.retained {
                w.u8(u8::from(r))?;
            }
            match &self.keywords {
                None => w.u8(0)?,
                Some(kw) => {
                    w.u8(1)?;
                    for list in kw {
                        w.u32(list.len() as u32)?;
                        for word in list {
                            w.str(word)?;
                        }
                    }
                }
            }
            Ok(())
        })
    }

    pub fn read(r: impl Read) -> Result<TopicModel> {
        let mut r = Reader::new(r);
        r.magic(TPC_MAGIC, TPC_VERSION)?;
        let k = r.u32("k")? as usize;
        let dim = r.u32("dim")? as usize;
        if k == 0 || dim == 0 {
            return Err(Error::Format("k and dim must be non-zero".into()));
        }
        let kmeans_seed = r.u64("seed")?;
        let centroids = r.f32s(k * dim, "centroids")?;
        let doc_counts = (0..k)
            .map(|_| r.u64("doc_counts"))
            .collect::<Result<Vec<_>>>()?;
        let retained = (0..k)
            .map(|_| r.u8("retained").map(|b| b != 0))
            .collect::<Result<Vec<_>>>()?;
        let keywords = match r.u8("keyword flag")? {
            0 => None,
            1 => {
                let mut all = Vec::with_capacity(k);
                for t in 0..k {
                    let n = r.u32("keyword count")? as usize;
                    let list = (0..n)
                        .map(|_| r.str(&format!("keywords of topic {t}")))
                        .collect::<Result<Vec<_>>>()?;
                    all.push(list);
                }
                Some(all)
            }
            f => return Err(Error::Format(format!("bad keyword flag {f}"))),
        };
        r.expect_eof()?;
        Ok(TopicModel {
            k,
            dim,
            centroids,
            doc_counts,
            retained,
            keywords,
            kmeans_seed,
        })
    }

    pub fn load(path: &Path) -> Result<TopicModel> {
        Self::read(binio::open(path)?)
    }
}

/// Nearest centroid over all topics, by Euclidean distance; ties → lowest index.
pub fn assign(embedding: &EmbeddingVector, model: &TopicModel) -> Result<usize> {
    Ok(model
        .nearest_among(embedding, 0..model.k)?
        .expect("topic model has k >= 1")
        .0)
}

/// doc_id → topic index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    map: BTreeMap<u64, usize>,
}

impl Assignment {
    /// Pairs `labels[i]` with the i-th document of `corpus`.
    pub fn from_labels(corpus: &Corpus, labels: &[usize]) -> Result<Self> {
        if corpus.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: corpus.len(),
                got: labels.len(),
            });
        }
        Ok(Self {
            map: corpus
                .documents()
                .iter()
                .zip(labels)
                .map(|(d, &l)| (d.doc_id, l))
                .collect(),
        })
    }

    pub fn from_map(map: BTreeMap<u64, usize>) -> Self {
        Self { map }
    }

    pub fn topic_of(&self, doc_id: u64) -> Option<usize> {
        self.map.get(&doc_id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        self.map.iter().map(|(&d, &t)| (d, t))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn counts(&self, k: usize) -> Vec<u64> {
        let mut counts = vec![0u64; k];
        for &t in self.map.values() {
            counts[t] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn model_from(centroids: Vec<Vec<f32>>, counts: Vec<u64>) -> TopicModel {
        let k = centroids.len();
        let dim = centroids[0].len();
        TopicModel {
            k,
            dim,
            centroids: centroids.into_iter().flatten().collect(),
            doc_counts: counts,
            retained: vec![true; k],
            keywords: None,
            kmeans_seed: 0,
        }
    }

    #[test]
    fn assign_exact_match_and_ties() {
        let m = model_from(
            vec![
                vec![5.0, 5.0],
                vec![1.0, 0.0],
                vec![3.0, 3.0],
                vec![0.0, 1.0],
                vec![-1.0, 0.0],
            ],
            vec![1; 5],
        );
        let v = EmbeddingVector::from_values(vec![0.0, 1.0]);
        assert_eq!(assign(&v, &m).unwrap(), 3);
        // Equidistant from centroid 1 and centroid 4.
        let v = EmbeddingVector::from_values(vec![0.0, -0.5]);
        assert_eq!(assign(&v, &m).unwrap(), 1);
        let bad = EmbeddingVector::from_values(vec![0.0, 0.5, 1.0]);
        assert!(matches!(assign(&bad, &m), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn prune_rule() {
        let m = model_from(vec![vec![0.0], vec![1.0], vec![2.0]], vec![10, 1, 7]);
        assert_eq!(m.prune(0).unwrap().retained, vec![true; 3]);
        let p = m.prune(5).unwrap();
        assert_eq!(p.retained, vec![true, false, true]);
        assert_eq!(p.centroids, m.centroids);
        assert_eq!(p.doc_counts, m.doc_counts);
        assert!(matches!(m.prune(11), Err(Error::NoRetainedTopics)));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tpc");
        let mut m = model_from(vec![vec![0.5, -0.25], vec![1.0, 2.0]], vec![3, 4]);
        m.save(&p).unwrap();
        assert_eq!(TopicModel::load(&p).unwrap(), m);
        m.keywords = Some(vec![vec!["art".into(), "museum".into()], vec![]]);
        m.retained[1] = false;
        m.save(&p).unwrap();
        assert_eq!(TopicModel::load(&p).unwrap(), m);

        let bytes = std::fs::read(&p).unwrap();
        assert!(matches!(
            TopicModel::read(&bytes[..bytes.len() - 4]),
            Err(Error::Truncated(_))
        ));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(TopicModel::read(&bad[..]), Err(Error::Format(_))));
        bad[0] = b'X';
        assert!(matches!(TopicModel::read(&bad[..]), Err(Error::Format(_))));
    }
}
