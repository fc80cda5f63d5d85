//! Embed a planted-topic corpus, cluster it with K-means, prune and label
//! the topics with c-TF-IDF keywords.
//!
//! cargo run --release --example embed_and_cluster

use std::collections::BTreeMap;

use moin::embedder::{embed_batch, EmbedderConfig};
use moin::synthetic::make_synthetic_corpus;
use moin::topic_model::{ctfidf_keywords, kmeans_fit, render_keyword_table, Assignment, KMeansParams};

fn main() -> moin::Result<()> {
    let sc = make_synthetic_corpus(6, 120, 50, 7)?;
    let corpus = &sc.corpus;
    let cfg = EmbedderConfig::default();
    let embeddings = embed_batch(&corpus.texts(), &cfg);

    let fit = kmeans_fit(&embeddings, &KMeansParams::new(6, 0))?;
    println!("WCSS per Lloyd iteration:");
    for (i, w) in fit.wcss_history.iter().enumerate() {
        println!("  {i:>2}  {w:.6}");
    }

    // Confusion of found clusters against planted topics.
    let mut confusion: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (doc, &label) in corpus.documents().iter().zip(&fit.labels) {
        *confusion.entry((sc.labels[&doc.doc_id], label)).or_default() += 1;
    }
    let pure = confusion.len();
    println!("\nnon-empty (planted, cluster) cells: {pure} (6 means a perfect match)");

    let assignment = Assignment::from_labels(corpus, &fit.labels)?;
    let mut model = fit.model.prune(100)?;
    model.keywords = Some(ctfidf_keywords(corpus, &assignment, &model, 4));
    println!("\nretained {} of {} topics (min_docs = 100)\n", model.num_retained(), model.k);
    print!("{}", render_keyword_table(&model, model.k));
    Ok(())
}
