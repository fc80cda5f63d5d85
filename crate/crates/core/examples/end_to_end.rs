//! The whole pipeline in a scratch workspace, the same steps the `moin`
//! binary runs: ingest, cluster, train, evaluate, report.
//!
//! cargo run --release --example end_to_end [WORKDIR]

use moin::lm::BaseModelConfig;
use moin::pipeline::{self, ClusterOptions, EvalOptions, SyntheticIngest, TrainOptions, Workspace};
use moin::trainer::TrainRecipe;

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let tmp = tempfile::tempdir()?;
    let root = std::env::args().nth(1).map_or_else(|| tmp.path().to_path_buf(), Into::into);
    let ws = Workspace::new(&root);

    pipeline::ingest_synthetic(
        &ws,
        &SyntheticIngest {
            num_topics: 4,
            docs_per_topic: 120,
            mc_items: 40,
            val_docs_per_topic: 8,
            ..Default::default()
        },
    )?;
    let summary = pipeline::cluster(&ws, &ClusterOptions { k: 4, ..Default::default() })?;
    println!("clusters: {:?}", summary.doc_counts);
    pipeline::train(
        &ws,
        &TrainOptions {
            base: BaseModelConfig {
                d_model: 48,
                mlp_hidden: 192,
                context_len: 96,
                ..Default::default()
            },
            pretrain_steps: 100,
            recipe: TrainRecipe {
                lr_max: 2e-3,
                lr_min: 2e-4,
                micro_batch: 4,
                ..Default::default()
            },
            workers: 2,
            ..Default::default()
        },
    )?;
    pipeline::evaluate(&ws, &EvalOptions::default())?;
    print!("{}", pipeline::report(&ws)?);
    Ok(())
}
