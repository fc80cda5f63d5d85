//! Pretrain a small base, then train one adapter per planted topic with a
//! pool of isolated workers and compare each expert with the base on
//! held-out documents of its own topic.
//!
//! cargo run --release --example train_experts

use std::collections::BTreeMap;

use moin::corpus::{Corpus, Split};
use moin::eval::per_expert_perplexity;
use moin::lm::{pretrain_base, BaseModel, BaseModelConfig, PretrainConfig};
use moin::registry::AdapterRegistry;
use moin::synthetic::make_synthetic_corpus;
use moin::trainer::{train_all, TopicShard, TrainAllOptions, TrainRecipe};

fn main() -> anyhow::Result<()> {
    let sc = make_synthetic_corpus(4, 150, 40, 3)?;
    let mut by_topic: BTreeMap<usize, Vec<_>> = BTreeMap::new();
    for d in sc.corpus.documents() {
        by_topic.entry(sc.labels[&d.doc_id]).or_default().push(d.clone());
    }
    let (train, held): (Vec<TopicShard>, Vec<TopicShard>) = by_topic
        .into_iter()
        .map(|(topic_id, documents)| TopicShard { topic_id, documents }.holdout(0.1, 0))
        .unzip();

    let pre_docs = train.iter().flat_map(|s| s.documents.clone()).collect();
    let pre = Corpus::new(pre_docs, Split::Train)?;
    let mut base = BaseModel::<f32>::init(BaseModelConfig {
        d_model: 48,
        mlp_hidden: 192,
        context_len: 96,
        ..Default::default()
    })?;
    let losses = pretrain_base(&mut base, &pre, 120, &PretrainConfig::default())?;
    println!(
        "pretrained base: loss {:.3} -> {:.3} over {} steps",
        losses[0],
        losses[losses.len() - 1],
        losses.len()
    );
    base.freeze();

    let recipe = TrainRecipe {
        lr_max: 2e-3,
        lr_min: 2e-4,
        micro_batch: 4,
        ..Default::default()
    };
    let dir = tempfile::tempdir()?;
    let outcome = train_all(&base, &train, &recipe, dir.path(), &TrainAllOptions::workers(2))?;
    for r in &outcome.reports {
        println!(
            "topic {} on worker {:?}: {} steps, {} tokens, loss {:.3} -> {:.3}",
            r.topic_id,
            r.worker_id,
            r.steps,
            r.tokens_seen,
            r.head_loss(),
            r.tail_loss()
        );
    }

    let registry = AdapterRegistry::scan(dir.path())?;
    println!("\nheld-out perplexity, own expert vs base:");
    for row in per_expert_perplexity(&base, &registry, &held)? {
        println!(
            "  topic {}: {:.3} vs {:.3} ({} docs)",
            row.topic_id, row.perplexity, row.base_perplexity, row.docs
        );
    }
    Ok(())
}
