use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{train_expert_observed, TopicShard, TrainRecipe, TrainReport};
use crate::binio;
use crate::error::{Error, Result};
use crate::lm::BaseModel;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

pub fn adapter_file_name(topic_id: usize) -> String {
    format!("adapter_{topic_id:05}.lra")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub topic_id: usize,
    pub status: Status,
    /// File name relative to the registry directory.
    pub adapter: Option<String>,
    pub tokens_seen: u64,
    pub final_loss: Option<f32>,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    binio::read_jsonl(path)
}

/// Kill the worker that is training `topic_id` once it reaches `after_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultPlan {
    pub topic_id: usize,
    pub after_steps: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TrainAllOptions {
    pub num_workers: usize,
    /// Per-worker pause inserted before every optimizer step, to model
    /// workers of different speeds. Missing entries mean no pause.
    pub step_delays: Vec<Duration>,
    pub fault: Option<FaultPlan>,
}

impl TrainAllOptions {
    pub fn workers(num_workers: usize) -> Self {
        Self {
            num_workers,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainAllOutcome {
    pub manifest: Vec<ManifestEntry>,
    pub reports: Vec<TrainReport>,
    pub manifest_path: PathBuf,
}

impl TrainAllOutcome {
    pub fn succeeded(&self) -> usize {
        self.manifest.iter().filter(|e| e.status == Status::Ok).count()
    }
}

enum Event {
    Started { worker: usize, shard: usize },
    Finished { worker: usize, shard: usize, result: Result<TrainReport> },
    Exited { worker: usize, died: bool },
}

/// Sends `Exited` even when the worker unwinds from a panic.
struct ExitNotice {
    worker: usize,
    tx: mpsc::Sender<Event>,
}

impl Drop for ExitNotice {
    fn drop(&mut self) {
        let _ = self.tx.send(Event::Exited {
            worker: self.worker,
            died: thread::panicking(),
        });
    }
}

struct WorkerCtx<'a> {
    base: &'a BaseModel<f32>,
    shards: &'a [TopicShard],
    recipe: &'a TrainRecipe,
    out_dir: &'a Path,
    options: &'a TrainAllOptions,
}

fn run_worker(ctx: &WorkerCtx<'_>, worker: usize, jobs: mpsc::Receiver<usize>, tx: mpsc::Sender<Event>) {
    let _notice = ExitNotice {
        worker,
        tx: tx.clone(),
    };
    let delay = ctx.options.step_delays.get(worker).copied().unwrap_or_default();
    for idx in jobs {
        let shard = &ctx.shards[idx];
        let _ = tx.send(Event::Started { worker, shard: idx });
        let fault = ctx.options.fault.filter(|f| f.topic_id == shard.topic_id);
        let mut on_step = |step: usize| {
            if !delay.is_zero() {
                thread::sleep(delay);
            }
            if let Some(f) = fault {
                if step == f.after_steps {
                    panic!("injected fault: worker {worker} killed on topic {}", f.topic_id);
                }
            }
        };
        let result = train_expert_observed(ctx.base, shard, ctx.recipe, &mut on_step).and_then(
            |(adapter, mut report)| {
                adapter.save(&ctx.out_dir.join(adapter_file_name(shard.topic_id)))?;
                report.worker_id = Some(worker);
                Ok(report)
            },
        );
        let _ = tx.send(Event::Finished {
            worker,
            shard: idx,
            result,
        });
    }
}

/// Trains every shard with a pool of `num_workers` isolated workers and
/// writes `adapter_NNNNN.lra` files plus a manifest into `out_dir`.
///
/// Workers share only read-only inputs. The orchestrator hands each worker
/// one shard at a time and hears back only start and finish notices. A
/// worker that dies takes its current topic down with it (marked `failed`);
/// a replacement worker picks up the remaining queue.
pub fn train_all(
    base: &BaseModel<f32>,
    shards: &[TopicShard],
    recipe: &TrainRecipe,
    out_dir: &Path,
    options: &TrainAllOptions,
) -> Result<TrainAllOutcome> {
    if options.num_workers == 0 {
        return Err(Error::InvalidConfig("num_workers must be >= 1".into()));
    }
    if !base.is_frozen() {
        return Err(Error::NotFrozen);
    }
    recipe.validate()?;
    let mut seen = std::collections::HashSet::new();
    for s in shards {
        if !seen.insert(s.topic_id) {
            return Err(Error::Invalid(format!("two shards for topic {}", s.topic_id)));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ctx = WorkerCtx {
        base,
        shards,
        recipe,
        out_dir,
        options,
    };
    let mut results: HashMap<usize, Result<TrainReport>> = HashMap::new();

    thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<Event>();
        let mut pending: VecDeque<usize> = (0..shards.len()).collect();
        let mut job_tx: HashMap<usize, mpsc::Sender<usize>> = HashMap::new();
        let mut in_flight: HashMap<usize, usize> = HashMap::new();
        let mut handles = Vec::new();
        let mut next_worker = 0;
        let ctx = &ctx;

        let mut spawn = |job_tx: &mut HashMap<usize, mpsc::Sender<usize>>,
                         in_flight: &mut HashMap<usize, usize>,
                         pending: &mut VecDeque<usize>| {
            let Some(first) = pending.pop_front() else {
                return;
            };
            let worker = next_worker;
            next_worker += 1;
            let (jtx, jrx) = mpsc::channel();
            jtx.send(first).expect("receiver alive");
            in_flight.insert(worker, first);
            job_tx.insert(worker, jtx);
            let tx = tx.clone();
            handles.push(scope.spawn(move || run_worker(ctx, worker, jrx, tx)));
        };

        for _ in 0..options.num_workers {
            spawn(&mut job_tx, &mut in_flight, &mut pending);
        }
        let mut live = job_tx.len();
        while live > 0 {
            let event = rx.recv().expect("a live worker holds a sender");
            match event {
                Event::Started { worker, shard } => {
                    log::debug!("worker {worker} started topic {}", shards[shard].topic_id);
                }
                Event::Finished {
                    worker,
                    shard,
                    result,
                } => {
                    in_flight.remove(&worker);
                    results.insert(shard, result);
                    match pending.pop_front() {
                        Some(next) => {
                            in_flight.insert(worker, next);
                            job_tx[&worker].send(next).expect("worker waiting for jobs");
                        }
                        None => {
                            job_tx.remove(&worker);
                        }
                    }
                }
                Event::Exited { worker, died } => {
                    live -= 1;
                    job_tx.remove(&worker);
                    if let Some(shard) = in_flight.remove(&worker) {
                        let topic = shards[shard].topic_id;
                        log::warn!("worker {worker} died while training topic {topic}");
                        results.insert(shard, Err(Error::Invalid(format!("worker {worker} died"))));
                    }
                    if died && !pending.is_empty() {
                        spawn(&mut job_tx, &mut in_flight, &mut pending);
                        live += 1;
                    }
                }
            }
        }
        for h in handles {
            // A panicked worker has already been accounted for.
            let _ = h.join();
        }
    });

    let mut manifest = Vec::with_capacity(shards.len());
    let mut reports = Vec::new();
    for (idx, shard) in shards.iter().enumerate() {
        let file = adapter_file_name(shard.topic_id);
        match results.remove(&idx) {
            Some(Ok(report)) => {
                manifest.push(ManifestEntry {
                    topic_id: shard.topic_id,
                    status: Status::Ok,
                    adapter: Some(file),
                    tokens_seen: report.tokens_seen,
                    final_loss: Some(report.final_loss() as f32),
                });
                reports.push(report);
            }
            other => {
                if let Some(Err(e)) = &other {
                    log::warn!("topic {} failed: {e}", shard.topic_id);
                }
                let stale = out_dir.join(&file);
                if stale.exists() {
                    std::fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
                }
                manifest.push(ManifestEntry {
                    topic_id: shard.topic_id,
                    status: Status::Failed,
                    adapter: None,
                    tokens_seen: 0,
                    final_loss: None,
                });
            }
        }
    }
    manifest.sort_by_key(|e| e.topic_id);
    reports.sort_by_key(|r| r.topic_id);
    let manifest_path = out_dir.join(MANIFEST_FILE);
    binio::write_jsonl_atomic(&manifest_path, &manifest)?;
    Ok(TrainAllOutcome {
        manifest,
        reports,
        manifest_path,
    })
}
