//! Lloyd's algorithm with seeded k-means++ initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{sq_dist, TopicModel};
use crate::hashing::derive_seed;
use crate::embedder::EmbeddingVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the largest centroid move (L2) falls below this.
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest final WCSS wins, ties to
    /// the earliest. Restart 0 uses `seed` itself.
    pub n_init: usize,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iters: 100,
            tol: 1e-6,
            n_init: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub model: TopicModel,
    /// Cluster of each input embedding, by position.
    pub labels: Vec<usize>,
    /// WCSS after each Lloyd iteration (assignment + mean update).
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansFit {
    pub fn wcss(&self) -> f64 {
        self.wcss_history.last().copied().unwrap_or(0.0)
    }
}

struct Points<'a> {
    data: Vec<&'a [f32]>,
    dim: usize,
}

impl Points<'_> {
    fn nearest(&self, centroids: &[f32], k: usize, i: usize) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for c in 0..k {
            let d = sq_dist(self.data[i], &centroids[c * self.dim..(c + 1) * self.dim]);
            if d < best.1 {
                best = (c, d);
            }
        }
        best
    }
}

fn kmeans_pp(points: &Points, k: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = points.data.len();
    let dim = points.dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(points.data[first]);
    let mut d2: Vec<f64> = points.data.iter().map(|p| sq_dist(p, points.data[first])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points.data[pick];
        centroids.extend_from_slice(c);
        for (i, p) in points.data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, c));
        }
    }
    centroids
}

fn wcss(points: &Points, centroids: &[f32], labels: &[usize]) -> f64 {
    let dim = points.dim;
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points.data[i], &centroids[c * dim..(c + 1) * dim]))
        .sum()
}

struct Run {
    centroids: Vec<f32>,
    labels: Vec<usize>,
    history: Vec<f64>,
    iterations: usize,
}

impl Run {
    fn wcss(&self) -> f64 {
        self.history.last().copied().unwrap_or(f64::INFINITY)
    }
}

fn lloyd(points: &Points, k: usize, seed: u64, max_iters: usize, tol: f64) -> Run {
    let n = points.data.len();
    let dim = points.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(points, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iters {
        iterations += 1;
        let nearest: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| points.nearest(&centroids, k, i))
            .collect();
        let mut dists: Vec<f64> = nearest.iter().map(|&(_, d)| d).collect();
        for (l, &(c, _)) in labels.iter_mut().zip(&nearest) {
            *l = c;
        }

        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        // Empty clusters take the point farthest from its own centroid.
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let mut far: Option<(usize, f64)> = None;
            for i in 0..n {
                if sizes[labels[i]] > 1 && far.is_none_or(|(_, d)| dists[i] > d) {
                    far = Some((i, dists[i]));
                }
            }
            let (i, _) = far.expect("n >= k leaves a cluster with two members");
            sizes[labels[i]] -= 1;
            labels[i] = c;
            sizes[c] = 1;
            dists[i] = 0.0;
        }

        let mut sums = vec![0.0f64; k * dim];
        for (i, &l) in labels.iter().enumerate() {
            for (s, &x) in sums[l * dim..(l + 1) * dim].iter_mut().zip(points.data[i]) {
                *s += f64::from(x);
            }
        }
        let mut movement = 0.0f64;
        let mut next = vec![0.0f32; k * dim];
        for c in 0..k {
            let inv = 1.0 / sizes[c] as f64;
            for j in 0..dim {
                next[c * dim + j] = (sums[c * dim + j] * inv) as f32;
            }
            let moved = sq_dist(&next[c * dim..(c + 1) * dim], &centroids[c * dim..(c + 1) * dim]);
            movement = movement.max(moved.sqrt());
        }
        centroids = next;
        history.push(wcss(points, &centroids, &labels));
        if movement < tol {
            break;
        }
    }

    Run {
        centroids,
        labels,
        history,
        iterations,
    }
}

/// Fits K-means. Centroid means are summed in f64 in input order and the
/// parallel assignment step is a pure map, so results are independent of the
/// thread count.
pub fn kmeans_fit(embeddings: &[EmbeddingVector], params: &KMeansParams) -> Result<KMeansFit> {
    let KMeansParams {
        k,
        seed,
        max_iters,
        tol,
        n_init,
    } = *params;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if max_iters == 0 || n_init == 0 || !(tol >= 0.0) {
        return Err(Error::InvalidConfig(
            "need max_iters >= 1, n_init >= 1 and tol >= 0".into(),
        ));
    }
    if embeddings.len() < k {
        return Err(Error::Invalid(format!(
            "k = {k} exceeds the number of points ({})",
            embeddings.len()
        )));
    }
    let dim = embeddings[0].dim();
    if let Some(bad) = embeddings.iter().find(|e| e.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    let points = Points {
        data: embeddings.iter().map(|e| e.values()).collect(),
        dim,
    };
    let mut best: Option<Run> = None;
    for r in 0..n_init {
        let run_seed = if r == 0 { seed } else { derive_seed(seed, r as u64) };
        let run = lloyd(&points, k, run_seed, max_iters, tol);
        log::debug!("k-means restart {r}: wcss {:.6}", run.wcss());
        if best.as_ref().is_none_or(|b| run.wcss() < b.wcss()) {
            best = Some(run);
        }
    }
    let Run {
        centroids,
        labels,
        history,
        iterations,
    } = best.expect("n_init >= 1");

    let mut doc_counts = vec![0u64; k];
    for &l in &labels {
        doc_counts[l] += 1;
    }
    Ok(KMeansFit {
        model: TopicModel {
            k,
            dim,
            centroids,
            doc_counts,
            retained: vec![true; k],
            keywords: None,
            kmeans_seed: seed,
        },
        labels,
        wcss_history: history,
        iterations,
    })
}
