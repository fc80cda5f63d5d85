//! Independent reference implementations used as oracles by the
//! integration tests. None of these call into the code they check beyond
//! reading its inputs.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use moin::embedder::EmbeddingVector;
use moin::router::RoutingDecision;
use moin::topic_model::TopicModel;

/// What a reference LRU did with one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefEvent {
    Hit { node: usize },
    Miss { node: usize, evicted: Option<usize> },
    Fallback { node: usize },
}

/// Plain-vector LRU per node; the front of each vector is least recent.
pub fn reference_lru(
    trace: &[RoutingDecision],
    placement: &BTreeMap<usize, usize>,
    num_nodes: usize,
    capacity: usize,
    base_node: usize,
) -> Vec<RefEvent> {
    let mut caches: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
    let mut out = Vec::new();
    for d in trace {
        if d.fallback {
            out.push(RefEvent::Fallback { node: base_node });
            continue;
        }
        let topic = d.topic_id.expect("routed request has a topic");
        let node = placement[&topic];
        let cache = &mut caches[node];
        if let Some(pos) = cache.iter().position(|&t| t == topic) {
            cache.remove(pos);
            cache.push(topic);
            out.push(RefEvent::Hit { node });
        } else {
            cache.push(topic);
            let evicted = if cache.len() > capacity {
                Some(cache.remove(0))
            } else {
                None
            };
            out.push(RefEvent::Miss { node, evicted });
        }
    }
    out
}

fn choose2(n: u64) -> f64 {
    (n * n.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = cells.values().map(|&n| choose2(n)).sum();
    let sa: f64 = rows.values().map(|&n| choose2(n)).sum();
    let sb: f64 = cols.values().map(|&n| choose2(n)).sum();
    let expected = sa * sb / choose2(a.len() as u64);
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Majority planted label for every found cluster.
pub fn majority_map(found: &[usize], planted: &[usize]) -> HashMap<usize, usize> {
    let mut votes: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
    for (&f, &p) in found.iter().zip(planted) {
        *votes.entry(f).or_default().entry(p).or_default() += 1;
    }
    votes
        .into_iter()
        .map(|(f, v)| {
            let best = v.into_iter().max_by_key(|&(p, n)| (n, std::cmp::Reverse(p))).unwrap().0;
            (f, best)
        })
        .collect()
}

/// Nearest-centroid routing by exhaustive scan in f64.
/// Returns `(topic, fallback)`.
pub fn brute_force_route(v: &EmbeddingVector, model: &TopicModel, always: bool) -> (usize, bool) {
    let mut best = usize::MAX;
    let mut best_d = f64::INFINITY;
    for t in 0..model.k {
        if always && !model.retained[t] {
            continue;
        }
        let c = &model.centroids[t * model.dim..(t + 1) * model.dim];
        let mut d = 0.0;
        for (x, y) in v.values().iter().zip(c) {
            d += (f64::from(*x) - f64::from(*y)).powi(2);
        }
        if d < best_d {
            best_d = d;
            best = t;
        }
    }
    let degenerate = v.values().iter().all(|&x| x == 0.0);
    let fallback = degenerate || (!always && !model.retained[best]);
    (best, fallback)
}

/// Summed next-token NLL from raw logits, via a direct log-sum-exp.
pub fn nll_sum(logits: &ndarray::Array2<f64>, targets: &[u32]) -> (f64, usize) {
    let mut total = 0.0;
    for (row, &t) in logits.rows().into_iter().zip(targets) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
        total += lse - row[t as usize];
    }
    (total, targets.len())
}
