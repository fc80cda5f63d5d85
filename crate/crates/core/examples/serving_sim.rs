//! Serve a skewed routed trace from per-node adapter caches, sweeping the
//! placement policy and cache size.
//!
//! cargo run --release --example serving_sim

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use moin::router::{RoutingDecision, RoutingMode};
use moin::serving::{simulate, CostModel, PlacementPolicy, Topology};
use moin::topic_model::TopicModel;

fn main() -> moin::Result<()> {
    let k = 40;
    let model = TopicModel {
        k,
        dim: 1,
        centroids: vec![0.0; k],
        doc_counts: (0..k as u64).map(|t| 10 + (t * 37) % 90).collect(),
        retained: (0..k).map(|t| t % 9 != 8).collect(),
        keywords: None,
        kmeans_seed: 0,
    };

    // Roughly Zipfian topic popularity; pruned topics fall back to the base.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trace: Vec<RoutingDecision> = (0..5000)
        .map(|i| {
            let t = ((k as f64) * rng.random::<f64>().powi(3)) as usize;
            RoutingDecision {
                query_id: i,
                topic_id: Some(t),
                similarity: 0.0,
                fallback: !model.retained[t],
                mode: RoutingMode::Fallback,
            }
        })
        .collect();

    println!("{:<13} {:>5} {:>9} {:>10} {:>12}", "policy", "cache", "hit rate", "evictions", "max busy");
    for policy in [PlacementPolicy::Hash, PlacementPolicy::RoundRobin, PlacementPolicy::SizeBalanced] {
        for cache in [1, 2, 4, 8] {
            let topo = Topology::new(&model, 4, cache, policy, CostModel::default())?;
            let m = simulate(&topo, &trace)?.metrics;
            let busiest = m.per_node.iter().map(|n| n.busy_time).max().unwrap_or(0);
            println!(
                "{:<13} {:>5} {:>9.4} {:>10} {:>12}",
                format!("{policy:?}"),
                cache,
                m.hit_rate,
                m.evictions,
                busiest
            );
        }
    }
    Ok(())
}
