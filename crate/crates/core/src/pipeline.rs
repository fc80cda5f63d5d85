//! A working directory that carries every artifact of a run, and the steps
//! that fill it: ingest, cluster, train, evaluate, report.
//!
//! ```text
//! work/
//!   train.jsonl val.jsonl labels.jsonl tasks/*.jsonl     ingest
//!   embedder.json embeddings.emb topics.tpc assignment.jsonl   cluster
//!   base.bse heldout.jsonl training.json experts/          train
//!   decisions.jsonl                                      route
//!   eval.json                                            eval
//!   serving.json                                         serve-sim
//!   report.json report.txt                               report
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binio;
use crate::corpus::{load_corpus, load_mc_items, save_mc_items, Corpus, McItem, Split};
use crate::embedder::{embed_batch, save_embeddings, EmbedderConfig};
use crate::error::{Error, Result};
use crate::eval::{
    cross_perplexity, docs_per_topic, eval_mc, eval_perplexity, per_expert_perplexity,
    render_expert_curve, CrossMatrix, ExpertPerplexity, Experts, TopicHistogram, Variant,
};
use crate::lm::{pretrain_base, BaseModel, BaseModelConfig, PretrainConfig};
use crate::registry::AdapterRegistry;
use crate::router::{inspect, render_inspections, Inspection, Router, RoutingMode};
use crate::serving::ServingMetrics;
use crate::synthetic::{SyntheticConfig, SyntheticCorpus};
use crate::topic_model::{
    ctfidf_keywords, kmeans_fit, render_keyword_table, Assignment, KMeansParams, TopicModel,
};
use crate::trainer::{
    read_manifest, shard_corpus, train_all, Status, TopicShard, TrainAllOptions, TrainRecipe,
    TrainReport, MANIFEST_FILE,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn create(&self) -> Result<()> {
        std::fs::create_dir_all(self.tasks_dir()).map_err(|e| Error::io(&self.root, e))
    }

    fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn train_corpus(&self) -> PathBuf {
        self.file("train.jsonl")
    }
    pub fn val_corpus(&self) -> PathBuf {
        self.file("val.jsonl")
    }
    pub fn labels(&self) -> PathBuf {
        self.file("labels.jsonl")
    }
    pub fn tasks_dir(&self) -> PathBuf {
        self.file("tasks")
    }
    pub fn embedder(&self) -> PathBuf {
        self.file("embedder.json")
    }
    pub fn embeddings(&self) -> PathBuf {
        self.file("embeddings.emb")
    }
    pub fn topic_model(&self) -> PathBuf {
        self.file("topics.tpc")
    }
    pub fn assignment(&self) -> PathBuf {
        self.file("assignment.jsonl")
    }
    pub fn base(&self) -> PathBuf {
        self.file("base.bse")
    }
    pub fn heldout(&self) -> PathBuf {
        self.file("heldout.jsonl")
    }
    pub fn training_log(&self) -> PathBuf {
        self.file("training.json")
    }
    pub fn experts_dir(&self) -> PathBuf {
        self.file("experts")
    }
    pub fn decisions(&self) -> PathBuf {
        self.file("decisions.jsonl")
    }
    pub fn eval(&self) -> PathBuf {
        self.file("eval.json")
    }
    pub fn serving(&self) -> PathBuf {
        self.file("serving.json")
    }
    pub fn report_json(&self) -> PathBuf {
        self.file("report.json")
    }
    pub fn report_txt(&self) -> PathBuf {
        self.file("report.txt")
    }

    /// Multiple-choice task files, by name, in name order.
    pub fn tasks(&self) -> Result<Vec<(String, Vec<McItem>)>> {
        let dir = self.tasks_dir();
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        paths
            .into_iter()
            .map(|p| {
                let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                Ok((name, load_mc_items(&p)?))
            })
            .collect()
    }

    pub fn load_embedder(&self) -> Result<EmbedderConfig> {
        read_json(&self.embedder())
    }

    pub fn load_assignment(&self) -> Result<Assignment> {
        let rows: Vec<AssignmentRow> = binio::read_jsonl(&self.assignment())?;
        Ok(Assignment::from_map(rows.into_iter().map(|r| (r.doc_id, r.topic_id)).collect()))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    binio::write_text_atomic(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Serialize, Deserialize)]
struct AssignmentRow {
    doc_id: u64,
    topic_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub doc_id: u64,
    pub topic: usize,
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticIngest {
    pub num_topics: usize,
    pub docs_per_topic: usize,
    pub vocab_per_topic: usize,
    pub val_docs_per_topic: usize,
    pub mc_items: usize,
    pub seed: u64,
}

impl Default for SyntheticIngest {
    fn default() -> Self {
        Self {
            num_topics: 8,
            docs_per_topic: 300,
            vocab_per_topic: 60,
            val_docs_per_topic: 20,
            mc_items: 160,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub train_docs: usize,
    pub train_tokens: usize,
    pub val_docs: usize,
    pub tasks: Vec<(String, usize)>,
}

fn ingest_summary(ws: &Workspace, train: &Corpus, val: &Corpus) -> Result<IngestSummary> {
    Ok(IngestSummary {
        train_docs: train.len(),
        train_tokens: train.total_tokens(),
        val_docs: val.len(),
        tasks: ws.tasks()?.into_iter().map(|(n, items)| (n, items.len())).collect(),
    })
}

/// Writes a planted-topic corpus, its validation split, planted labels and
/// two multiple-choice tasks (4-way and 2-way).
pub fn ingest_synthetic(ws: &Workspace, opts: &SyntheticIngest) -> Result<IngestSummary> {
    ws.create()?;
    let sc = SyntheticCorpus::generate(SyntheticConfig::new(
        opts.num_topics,
        opts.docs_per_topic,
        opts.vocab_per_topic,
        opts.seed,
    ))?;
    sc.corpus.save_jsonl(&ws.train_corpus())?;
    let (val, val_labels) = sc.validation(opts.val_docs_per_topic.max(1))?;
    val.save_jsonl(&ws.val_corpus())?;
    let mut labels: Vec<LabelRow> = sc
        .labels
        .iter()
        .chain(&val_labels)
        .map(|(&doc_id, &topic)| LabelRow { doc_id, topic })
        .collect();
    labels.sort_by_key(|r| r.doc_id);
    binio::write_jsonl_atomic(&ws.labels(), &labels)?;
    if opts.mc_items > 0 {
        save_mc_items(&sc.mc_items(opts.mc_items, 4, 1), &ws.tasks_dir().join("cloze4.jsonl"))?;
        save_mc_items(&sc.mc_items(opts.mc_items, 2, 2), &ws.tasks_dir().join("cloze2.jsonl"))?;
    }
    ingest_summary(ws, &sc.corpus, &val)
}

/// Copies existing JSONL inputs into the workspace after validating them.
pub fn ingest_files(ws: &Workspace, train: &Path, val: &Path, tasks: &[PathBuf]) -> Result<IngestSummary> {
    ws.create()?;
    let train = load_corpus(train, Split::Train)?;
    let val = load_corpus(val, Split::Validation)?;
    train.save_jsonl(&ws.train_corpus())?;
    val.save_jsonl(&ws.val_corpus())?;
    for t in tasks {
        let items = load_mc_items(t)?;
        let name = t.file_name().ok_or_else(|| Error::Invalid(format!("bad task path {t:?}")))?;
        save_mc_items(&items, &ws.tasks_dir().join(name))?;
    }
    ingest_summary(ws, &train, &val)
}

// ---------------------------------------------------------------- cluster

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOptions {
    pub k: usize,
    pub seed: u64,
    pub n_init: usize,
    pub min_docs: u64,
    pub top_n_keywords: usize,
    pub embed: EmbedderConfig,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self {
            k: 8,
            seed: 0,
            n_init: 10,
            min_docs: 1,
            top_n_keywords: 4,
            embed: EmbedderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub k: usize,
    pub retained: usize,
    pub wcss: f64,
    pub iterations: usize,
    pub doc_counts: Vec<u64>,
}

pub fn cluster(ws: &Workspace, opts: &ClusterOptions) -> Result<ClusterSummary> {
    opts.embed.validate()?;
    let corpus = load_corpus(&ws.train_corpus(), Split::Train)?;
    let embeddings = embed_batch(&corpus.texts(), &opts.embed);
    save_embeddings(&embeddings, opts.embed.dimension, &ws.embeddings())?;
    let params = KMeansParams {
        n_init: opts.n_init,
        ..KMeansParams::new(opts.k, opts.seed)
    };
    let fit = kmeans_fit(&embeddings, &params)?;
    let assignment = Assignment::from_labels(&corpus, &fit.labels)?;
    let mut model = fit.model.prune(opts.min_docs)?;
    model.keywords = Some(ctfidf_keywords(&corpus, &assignment, &model, opts.top_n_keywords));
    model.save(&ws.topic_model())?;
    write_json(&ws.embedder(), &opts.embed)?;
    binio::write_jsonl_atomic(
        &ws.assignment(),
        assignment.iter().map(|(doc_id, topic_id)| AssignmentRow { doc_id, topic_id }),
    )?;
    Ok(ClusterSummary {
        k: model.k,
        retained: model.num_retained(),
        wcss: fit.wcss(),
        iterations: fit.iterations,
        doc_counts: model.doc_counts.clone(),
    })
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub base: BaseModelConfig,
    pub pretrain_steps: usize,
    pub pretrain: PretrainConfig,
    /// Pretrain even if `base.bse` already exists.
    pub retrain_base: bool,
    pub recipe: TrainRecipe,
    pub workers: usize,
    pub holdout_fraction: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            base: BaseModelConfig::default(),
            pretrain_steps: 600,
            pretrain: PretrainConfig::default(),
            retrain_base: false,
            recipe: TrainRecipe::default(),
            workers: 4,
            holdout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub base_config: BaseModelConfig,
    pub base_checksum: String,
    pub pretrain: Option<PretrainConfig>,
    pub pretrain_losses: Vec<f64>,
    /// Wall time of pretraining in this run; none when an existing base was reused.
    pub pretrain_secs: Option<f64>,
    pub recipe: TrainRecipe,
    pub workers: usize,
    pub holdout_fraction: f64,
    pub experts_ok: usize,
    pub experts_failed: usize,
    pub reports: Vec<TrainReport>,
}

#[derive(Serialize, Deserialize)]
struct HeldoutRow {
    doc_id: u64,
    topic_id: usize,
}

/// Shards by topic, holds out a slice per shard, pretrains the base on the
/// remaining documents (unless one exists), then trains every expert.
pub fn train(ws: &Workspace, opts: &TrainOptions) -> Result<TrainingLog> {
    let corpus = load_corpus(&ws.train_corpus(), Split::Train)?;
    let model = TopicModel::load(&ws.topic_model())?;
    let assignment = ws.load_assignment()?;
    let shards = shard_corpus(&corpus, &assignment, &model)?;
    let (train_shards, held): (Vec<TopicShard>, Vec<TopicShard>) = shards
        .iter()
        .map(|s| s.holdout(opts.holdout_fraction, opts.recipe.seed))
        .unzip();
    binio::write_jsonl_atomic(
        &ws.heldout(),
        held.iter().flat_map(|s| {
            s.documents.iter().map(|d| HeldoutRow {
                doc_id: d.doc_id,
                topic_id: s.topic_id,
            })
        }),
    )?;

    let (mut base, losses, pretrain, pretrain_secs) = if ws.base().exists() && !opts.retrain_base {
        log::info!("reusing {}", ws.base().display());
        (BaseModel::<f32>::load(&ws.base())?, Vec::new(), None, None)
    } else {
        let held_ids: std::collections::HashSet<u64> =
            held.iter().flat_map(|s| s.doc_ids()).collect();
        let docs = corpus
            .documents()
            .iter()
            .filter(|d| !held_ids.contains(&d.doc_id))
            .cloned()
            .collect();
        let pre_corpus = Corpus::new(docs, Split::Train)?;
        let mut base = BaseModel::<f32>::init(opts.base)?;
        log::info!("pretraining base for {} steps", opts.pretrain_steps);
        let t = std::time::Instant::now();
        let losses = pretrain_base(&mut base, &pre_corpus, opts.pretrain_steps, &opts.pretrain)?;
        base.freeze();
        base.save(&ws.base())?;
        (base, losses, Some(opts.pretrain), Some(t.elapsed().as_secs_f64()))
    };
    base.freeze();
    let checksum = base.checksum();
    let outcome = train_all(
        &base,
        &train_shards,
        &opts.recipe,
        &ws.experts_dir(),
        &TrainAllOptions::workers(opts.workers),
    )?;
    let log = TrainingLog {
        base_config: base.config,
        base_checksum: checksum,
        pretrain,
        pretrain_losses: losses,
        pretrain_secs,
        recipe: opts.recipe,
        workers: opts.workers,
        holdout_fraction: opts.holdout_fraction,
        experts_ok: outcome.succeeded(),
        experts_failed: outcome.manifest.len() - outcome.succeeded(),
        reports: outcome.reports,
    };
    write_json(&ws.training_log(), &log)?;
    Ok(log)
}

/// Held-out slices written by [`train`], grouped by topic.
pub fn load_heldout(ws: &Workspace) -> Result<Vec<TopicShard>> {
    let corpus = load_corpus(&ws.train_corpus(), Split::Train)?;
    let rows: Vec<HeldoutRow> = binio::read_jsonl(&ws.heldout())?;
    let mut by_topic: BTreeMap<usize, Vec<_>> = BTreeMap::new();
    for r in rows {
        let doc = corpus
            .get(r.doc_id)
            .ok_or_else(|| Error::Invalid(format!("held-out doc {} not in corpus", r.doc_id)))?;
        by_topic.entry(r.topic_id).or_default().push(doc.clone());
    }
    Ok(by_topic
        .into_iter()
        .map(|(topic_id, documents)| TopicShard {
            topic_id,
            documents,
        })
        .collect())
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityRow {
    pub model: Variant,
    pub perplexity: f64,
    pub tokens: usize,
    pub routed_docs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: Variant,
    pub task: String,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniqueAdaptersRow {
    pub task: String,
    pub model: Variant,
    pub queries: usize,
    pub unique_adapters: usize,
    pub available_adapters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub table1_perplexity: Vec<PerplexityRow>,
    pub table2_zero_shot: Vec<AccuracyRow>,
    pub table4_unique_adapters: Vec<UniqueAdaptersRow>,
    pub fig2_expert_perplexity: Vec<ExpertPerplexity>,
    pub fig3_docs_per_topic: TopicHistogram,
    pub cross_perplexity: CrossMatrix,
    pub table6_routing: Vec<Inspection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Validation documents shown in the routing inspection table.
    pub inspect_rows: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { inspect_rows: 8 }
    }
}

pub fn evaluate(ws: &Workspace, opts: &EvalOptions) -> Result<EvalReport> {
    let mut base = BaseModel::<f32>::load(&ws.base())?;
    base.freeze();
    let registry = AdapterRegistry::scan(&ws.experts_dir())?;
    let topics = TopicModel::load(&ws.topic_model())?;
    let embed = ws.load_embedder()?;
    let val = load_corpus(&ws.val_corpus(), Split::Validation)?;
    let experts = Experts {
        base: &base,
        registry: &registry,
        topics: &topics,
        embed: &embed,
    };

    let mut table1 = Vec::new();
    for v in Variant::ALL {
        let r = eval_perplexity(&experts, &val, v)?;
        log::info!("{v}: perplexity {:.4}", r.perplexity);
        table1.push(PerplexityRow {
            model: v,
            perplexity: r.perplexity,
            tokens: r.tokens,
            routed_docs: r.routed_docs,
        });
    }

    let mut table2 = Vec::new();
    let mut table4 = Vec::new();
    for (task, items) in ws.tasks()? {
        for v in Variant::ALL {
            let r = eval_mc(&experts, &items, v)?;
            table2.push(AccuracyRow {
                model: v,
                task: task.clone(),
                accuracy: r.accuracy,
                correct: r.correct,
                total: r.total,
            });
            if v != Variant::BaseOnly {
                table4.push(UniqueAdaptersRow {
                    task: task.clone(),
                    model: v,
                    queries: items.len(),
                    unique_adapters: r.unique_adapters,
                    available_adapters: registry.len(),
                });
            }
        }
    }

    let held = load_heldout(ws)?;
    let fig2 = per_expert_perplexity(&base, &registry, &held)?;
    let cross = cross_perplexity(&base, &registry, &held)?;
    let fig3 = docs_per_topic(&ws.load_assignment()?, &topics);

    let router = Router::new(&topics, &embed, RoutingMode::Fallback);
    let table6 = val
        .documents()
        .iter()
        .take(opts.inspect_rows)
        .map(|d| Ok(inspect(&router.route(d.doc_id, &d.text)?, &d.text, &topics)))
        .collect::<Result<Vec<_>>>()?;

    let report = EvalReport {
        table1_perplexity: table1,
        table2_zero_shot: table2,
        table4_unique_adapters: table4,
        fig2_expert_perplexity: fig2,
        fig3_docs_per_topic: fig3,
        cross_perplexity: cross,
        table6_routing: table6,
    };
    write_json(&ws.eval(), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordRow {
    pub topic: usize,
    pub docs: u64,
    pub retained: bool,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub topics: usize,
    pub retained_topics: usize,
    pub experts_ok: usize,
    pub experts_failed: usize,
    pub eval: EvalReport,
    pub table5_keywords: Vec<KeywordRow>,
    pub serving: Option<ServingMetrics>,
}

/// Collects the artifacts of a finished run into `report.json` and a
/// human-readable `report.txt`; returns the text.
pub fn report(ws: &Workspace) -> Result<String> {
    let topics = TopicModel::load(&ws.topic_model())?;
    let eval: EvalReport = read_json(&ws.eval())?;
    let manifest = read_manifest(&ws.experts_dir().join(MANIFEST_FILE))?;
    let serving: Option<ServingMetrics> = if ws.serving().exists() {
        Some(read_json(&ws.serving())?)
    } else {
        None
    };
    let ok = manifest.iter().filter(|e| e.status == Status::Ok).count();
    let rep = Report {
        topics: topics.k,
        retained_topics: topics.num_retained(),
        experts_ok: ok,
        experts_failed: manifest.len() - ok,
        table5_keywords: (0..topics.k)
            .map(|t| KeywordRow {
                topic: t,
                docs: topics.doc_counts[t],
                retained: topics.retained[t],
                keywords: topics.keywords_of(t).to_vec(),
            })
            .collect(),
        eval,
        serving,
    };
    write_json(&ws.report_json(), &rep)?;
    let text = render_report(&rep, &topics);
    binio::write_text_atomic(&ws.report_txt(), &text)?;
    Ok(text)
}

pub fn render_report(rep: &Report, topics: &TopicModel) -> String {
    let e = &rep.eval;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Topics: retained {} of {}; experts trained {} (failed {})\n",
        rep.retained_topics, rep.topics, rep.experts_ok, rep.experts_failed
    );

    let _ = writeln!(s, "== Table 1: validation perplexity ==");
    let _ = writeln!(s, "{:<14} {:>10} {:>9} {:>12}", "model", "perplexity", "tokens", "routed docs");
    for r in &e.table1_perplexity {
        let _ = writeln!(s, "{:<14} {:>10.4} {:>9} {:>12}", r.model.to_string(), r.perplexity, r.tokens, r.routed_docs);
    }

    let _ = writeln!(s, "\n== Table 2: zero-shot multiple choice accuracy ==");
    let tasks: Vec<&str> = {
        let mut t: Vec<&str> = e.table2_zero_shot.iter().map(|r| r.task.as_str()).collect();
        t.dedup();
        t
    };
    let _ = write!(s, "{:<14}", "model");
    for t in &tasks {
        let _ = write!(s, " {t:>10}");
    }
    s.push('\n');
    for v in Variant::ALL {
        let _ = write!(s, "{:<14}", v.to_string());
        for t in &tasks {
            let acc = e
                .table2_zero_shot
                .iter()
                .find(|r| r.model == v && r.task == *t)
                .map_or(f64::NAN, |r| r.accuracy);
            let _ = write!(s, " {acc:>10.4}");
        }
        s.push('\n');
    }

    let _ = writeln!(s, "\n== Table 4: unique adapters used per task ==");
    let _ = writeln!(s, "{:<10} {:<14} {:>8} {:>8} {:>10}", "task", "model", "queries", "unique", "available");
    for r in &e.table4_unique_adapters {
        let _ = writeln!(
            s,
            "{:<10} {:<14} {:>8} {:>8} {:>10}",
            r.task,
            r.model.to_string(),
            r.queries,
            r.unique_adapters,
            r.available_adapters
        );
    }

    let _ = writeln!(s, "\n== Table 5: topic keywords (c-TF-IDF) ==");
    s.push_str(&render_keyword_table(topics, topics.k));

    let _ = writeln!(s, "\n== Table 6: query routing ==");
    s.push_str(&render_inspections(&e.table6_routing));

    let _ = writeln!(s, "\n== Figure 2: sorted per-expert held-out perplexity ==");
    s.push_str(&render_expert_curve(&e.fig2_expert_perplexity, 40));

    let _ = writeln!(s, "\n== Figure 3: training documents per topic ==");
    s.push_str(&e.fig3_docs_per_topic.render_text(40));

    let c = &e.cross_perplexity;
    let _ = writeln!(s, "\n== Expert x topic held-out perplexity (* = own topic) ==");
    s.push_str(&c.render());
    let _ = writeln!(
        s,
        "row minimum on diagonal: {:.3}; column minimum on diagonal: {:.3}",
        c.row_diagonal_fraction(),
        c.column_diagonal_fraction()
    );

    if let Some(m) = &rep.serving {
        let _ = writeln!(s, "\n== Serving simulation ==");
        if let Ok(text) = crate::serving::report(m, crate::serving::ReportFormat::Text) {
            s.push_str(&text);
        }
    }
    s
}
