use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use moin::embedder::EmbedderConfig;
use moin::lm::{BaseModelConfig, PretrainConfig};
use moin::pipeline::{self, ClusterOptions, EvalOptions, SyntheticIngest, TrainOptions, Workspace};
use moin::router::{load_decisions, load_queries, save_decisions, Router, RoutingMode};
use moin::serving::{self, CostModel, PlacementPolicy, ReportFormat, Topology};
use moin::topic_model::TopicModel;
use moin::trainer::TrainRecipe;

#[derive(Parser)]
#[command(name = "moin", version, about = "Topic-routed LoRA experts over a frozen toy language model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write train/validation corpora and multiple-choice tasks into a workspace.
    Ingest(IngestArgs),
    /// Embed the training corpus, fit K-means, prune and extract keywords.
    Cluster(ClusterArgs),
    /// Pretrain the base (if missing) and train one adapter per retained topic.
    Train(TrainArgs),
    /// Route queries (JSONL with id and text) to topics.
    Route(RouteArgs),
    /// Perplexity, multiple choice and per-expert tables.
    Eval(EvalArgs),
    /// Simulate serving a routed trace from per-node adapter caches.
    ServeSim(ServeArgs),
    /// Collect a finished workspace into report.json and report.txt.
    Report(WorkArg),
}

#[derive(Args)]
struct WorkArg {
    #[arg(long, default_value = "work")]
    work: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    work: WorkArg,
    /// Existing training corpus; omit to generate a synthetic one.
    #[arg(long, requires = "val")]
    train: Option<PathBuf>,
    #[arg(long)]
    val: Option<PathBuf>,
    /// Multiple-choice task files (repeatable).
    #[arg(long)]
    task: Vec<PathBuf>,
    #[arg(long, default_value_t = 8)]
    topics: usize,
    #[arg(long, default_value_t = 300)]
    docs_per_topic: usize,
    #[arg(long, default_value_t = 60)]
    vocab_per_topic: usize,
    #[arg(long, default_value_t = 20)]
    val_docs_per_topic: usize,
    #[arg(long, default_value_t = 160)]
    mc_items: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    work: WorkArg,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    /// Topics with fewer training documents are pruned.
    #[arg(long, default_value_t = 1)]
    min_docs: u64,
    #[arg(long, default_value_t = 4)]
    keywords: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 3)]
    ngram: usize,
    #[arg(long, default_value_t = 4096)]
    buckets: usize,
    #[arg(long, default_value_t = 0)]
    projection_seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    work: WorkArg,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long, default_value_t = 0.1)]
    holdout: f64,
    #[arg(long, default_value_t = 600)]
    pretrain_steps: usize,
    #[arg(long)]
    retrain_base: bool,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 2)]
    n_layers: usize,
    #[arg(long, default_value_t = 4)]
    n_heads: usize,
    #[arg(long, default_value_t = 128)]
    context_len: usize,
    #[arg(long)]
    mlp_hidden: Option<usize>,
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
    // Expert recipe.
    #[arg(long, default_value_t = 4e-4)]
    lr_max: f64,
    #[arg(long, default_value_t = 4e-5)]
    lr_min: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.95)]
    beta2: f64,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    micro_batch: usize,
    #[arg(long, default_value_t = 1)]
    grad_accum: usize,
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long, default_value_t = 8)]
    rank: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RouteArgs {
    #[arg(long)]
    topic_model: PathBuf,
    #[arg(long, default_value = "fallback")]
    mode: RoutingMode,
    #[arg(long)]
    queries: PathBuf,
    /// Embedder settings as JSON; defaults use the topic model's dimension.
    #[arg(long)]
    embedder: Option<PathBuf>,
    #[arg(long, default_value_t = moin::router::DEFAULT_MAX_QUERY_CHARS)]
    max_query_chars: usize,
    /// Decisions JSONL; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    work: WorkArg,
    #[arg(long, default_value_t = 8)]
    inspect_rows: usize,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    cache: usize,
    #[arg(long, default_value = "hash")]
    policy: PlacementPolicy,
    /// Routing decisions JSONL.
    #[arg(long)]
    trace: PathBuf,
    /// Topic model providing the retained topics and their sizes.
    #[arg(long)]
    topic_model: PathBuf,
    #[arg(long, default_value_t = 1)]
    cost_hit: u64,
    #[arg(long, default_value_t = 10)]
    cost_load: u64,
    #[arg(long)]
    json: bool,
    /// Also write the metrics JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Ingest(a) => {
            let ws = Workspace::new(&a.work.work);
            let summary = match (&a.train, &a.val) {
                (Some(t), Some(v)) => pipeline::ingest_files(&ws, t, v, &a.task)?,
                (None, None) => {
                    if !a.task.is_empty() {
                        bail!("--task needs --train and --val");
                    }
                    pipeline::ingest_synthetic(
                        &ws,
                        &SyntheticIngest {
                            num_topics: a.topics,
                            docs_per_topic: a.docs_per_topic,
                            vocab_per_topic: a.vocab_per_topic,
                            val_docs_per_topic: a.val_docs_per_topic,
                            mc_items: a.mc_items,
                            seed: a.seed,
                        },
                    )?
                }
                _ => bail!("--train and --val go together"),
            };
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Cmd::Cluster(a) => {
            let ws = Workspace::new(&a.work.work);
            let summary = pipeline::cluster(
                &ws,
                &ClusterOptions {
                    k: a.k,
                    seed: a.seed,
                    n_init: a.n_init,
                    min_docs: a.min_docs,
                    top_n_keywords: a.keywords,
                    embed: EmbedderConfig {
                        dimension: a.dim,
                        ngram_size: a.ngram,
                        hash_buckets: a.buckets,
                        projection_seed: a.projection_seed,
                    },
                },
            )?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Cmd::Train(a) => {
            let ws = Workspace::new(&a.work.work);
            let opts = TrainOptions {
                base: BaseModelConfig {
                    d_model: a.d_model,
                    n_layers: a.n_layers,
                    n_heads: a.n_heads,
                    context_len: a.context_len,
                    mlp_hidden: a.mlp_hidden.unwrap_or(4 * a.d_model),
                    init_seed: a.init_seed,
                    ..Default::default()
                },
                pretrain_steps: a.pretrain_steps,
                pretrain: PretrainConfig::default(),
                retrain_base: a.retrain_base,
                recipe: TrainRecipe {
                    beta1: a.beta1,
                    beta2: a.beta2,
                    weight_decay: a.weight_decay,
                    lr_max: a.lr_max,
                    lr_min: a.lr_min,
                    epochs: a.epochs,
                    micro_batch: a.micro_batch,
                    grad_accum: a.grad_accum,
                    grad_clip: a.grad_clip,
                    rank: a.rank,
                    seed: a.seed,
                    ..Default::default()
                },
                workers: a.workers,
                holdout_fraction: a.holdout,
            };
            let log = pipeline::train(&ws, &opts)?;
            println!(
                "experts ok {} failed {}; base {}",
                log.experts_ok, log.experts_failed, log.base_checksum
            );
        }
        Cmd::Route(a) => {
            let model = TopicModel::load(&a.topic_model)?;
            let embed = match &a.embedder {
                Some(p) => serde_json::from_str(
                    &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => EmbedderConfig {
                    dimension: model.dim,
                    ..Default::default()
                },
            };
            let queries = load_queries(&a.queries)?;
            let mut router = Router::new(&model, &embed, a.mode);
            router.max_query_chars = a.max_query_chars;
            let (decisions, stats) = router.route_batch(&queries)?;
            match &a.out {
                Some(p) => save_decisions(&decisions, p)?,
                None => {
                    for d in &decisions {
                        println!("{}", serde_json::to_string(d)?);
                    }
                }
            }
            eprintln!(
                "{} queries, {} fallbacks, {} unique topics, {} unique adapters",
                stats.queries, stats.fallbacks, stats.unique_topics, stats.unique_adapters
            );
        }
        Cmd::Eval(a) => {
            let ws = Workspace::new(&a.work.work);
            let r = pipeline::evaluate(
                &ws,
                &EvalOptions {
                    inspect_rows: a.inspect_rows,
                },
            )?;
            for row in &r.table1_perplexity {
                println!("{:<14} perplexity {:.4}", row.model.to_string(), row.perplexity);
            }
        }
        Cmd::ServeSim(a) => {
            let model = TopicModel::load(&a.topic_model)?;
            let topo = Topology::new(
                &model,
                a.nodes,
                a.cache,
                a.policy,
                CostModel {
                    cost_hit: a.cost_hit,
                    cost_load: a.cost_load,
                },
            )?;
            let trace = load_decisions(&a.trace)?;
            let sim = serving::simulate(&topo, &trace)?;
            if let Some(p) = &a.out {
                std::fs::write(p, serving::report(&sim.metrics, ReportFormat::Json)?)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            let format = if a.json { ReportFormat::Json } else { ReportFormat::Text };
            println!("{}", serving::report(&sim.metrics, format)?);
        }
        Cmd::Report(a) => {
            let ws = Workspace::new(&a.work);
            print!("{}", pipeline::report(&ws)?);
        }
    }
    Ok(())
}
