//! Route unseen documents to topics in both routing modes, with one topic
//! pruned so the two modes disagree.
//!
//! cargo run --release --example route_queries

use moin::embedder::{embed_batch, EmbedderConfig};
use moin::router::{inspect, render_inspections, Query, Router, RoutingMode};
use moin::synthetic::make_synthetic_corpus;
use moin::topic_model::{ctfidf_keywords, kmeans_fit, Assignment, KMeansParams};

fn main() -> moin::Result<()> {
    let sc = make_synthetic_corpus(5, 100, 50, 11)?;
    let cfg = EmbedderConfig::default();
    let fit = kmeans_fit(&embed_batch(&sc.corpus.texts(), &cfg), &KMeansParams::new(5, 0))?;
    let assignment = Assignment::from_labels(&sc.corpus, &fit.labels)?;

    // Drop one topic: the smallest is fine, all are the same size here.
    let mut model = fit.model.clone();
    model.retained[4] = false;
    model.keywords = Some(ctfidf_keywords(&sc.corpus, &assignment, &model, 4));

    let (val, _) = sc.validation(4)?;
    let queries: Vec<Query> = val
        .documents()
        .iter()
        .map(|d| Query { id: d.doc_id, text: d.text.clone() })
        .chain([Query { id: 9999, text: String::new() }])
        .collect();

    for mode in [RoutingMode::Fallback, RoutingMode::AlwaysRoute] {
        let (decisions, stats) = Router::new(&model, &cfg, mode).route_batch(&queries)?;
        println!(
            "\nmode {mode}: {} queries, {} on the base model, {} distinct adapters",
            stats.queries, stats.fallbacks, stats.unique_adapters
        );
        let rows: Vec<_> = decisions
            .iter()
            .zip(&queries)
            .step_by(3)
            .map(|(d, q)| inspect(d, &q.text, &model))
            .collect();
        print!("{}", render_inspections(&rows));
    }
    Ok(())
}
