//! Per-topic expert training.
//!
//! Each retained topic gets a shard of the training corpus and one LoRA
//! adapter trained on it against the frozen base. A training run depends only
//! on `(base, shard, recipe)`, which is what lets [`train_all`] farm shards out
//! to any number of workers and still write identical files.

mod orchestrator;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::lm::{
    accumulate_gradient, clip_grad_norm, cosine_lr, predicted_tokens, AdamW, AdamWParams,
    BaseModel, GradTarget,
};
use crate::lora::{init_adapter, LoraAdapter};
use crate::topic_model::{Assignment, TopicModel};

pub use orchestrator::{
    adapter_file_name, read_manifest, train_all, FaultPlan, ManifestEntry, Status,
    TrainAllOptions, TrainAllOutcome, MANIFEST_FILE,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecipe {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub lr_max: f64,
    pub lr_min: f64,
    pub epochs: usize,
    /// Documents per forward/backward pass.
    pub micro_batch: usize,
    /// Micro-batches per optimizer step; effective batch is the product.
    pub grad_accum: usize,
    pub grad_clip: Option<f64>,
    pub rank: usize,
    pub seed: u64,
}

impl Default for TrainRecipe {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.0,
            lr_max: 4e-4,
            lr_min: 4e-5,
            epochs: 1,
            micro_batch: 16,
            grad_accum: 1,
            grad_clip: None,
            rank: 8,
            seed: 0,
        }
    }
}

impl TrainRecipe {
    pub fn effective_batch(&self) -> usize {
        self.micro_batch * self.grad_accum
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min <= self.lr_max) || self.lr_min < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= lr_min <= lr_max, got {} and {}",
                self.lr_min, self.lr_max
            )));
        }
        if self.epochs == 0 || self.micro_batch == 0 || self.grad_accum == 0 || self.rank == 0 {
            return Err(Error::InvalidConfig(
                "epochs, micro_batch, grad_accum and rank must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamWParams {
        AdamWParams {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    /// Optimizer steps needed for `docs` documents.
    pub fn steps_for(&self, docs: usize) -> usize {
        docs.div_ceil(self.effective_batch()) * self.epochs
    }

    fn init_seed(&self, topic: usize) -> u64 {
        derive_seed(self.seed, 2 * topic as u64)
    }

    fn order_seed(&self, topic: usize) -> u64 {
        derive_seed(self.seed, 2 * topic as u64 + 1)
    }
}

/// The training documents of one topic, owned so a worker needs nothing else.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicShard {
    pub topic_id: usize,
    pub documents: Vec<Document>,
}

impl TopicShard {
    pub fn doc_ids(&self) -> Vec<u64> {
        self.documents.iter().map(|d| d.doc_id).collect()
    }

    pub fn total_tokens(&self) -> usize {
        self.documents.iter().map(|d| d.token_ids.len()).sum()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Splits off a held-out slice of `round(fraction * n)` documents, at least
    /// one when the shard has two or more, chosen by a seeded shuffle.
    pub fn holdout(&self, fraction: f64, seed: u64) -> (TopicShard, TopicShard) {
        let n = self.documents.len();
        let mut n_val = (fraction.clamp(0.0, 1.0) * n as f64).round() as usize;
        if fraction > 0.0 && n >= 2 {
            n_val = n_val.clamp(1, n - 1);
        } else {
            n_val = n_val.min(n.saturating_sub(1));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, self.topic_id as u64)));
        let mut val_idx = idx[..n_val].to_vec();
        let mut train_idx = idx[n_val..].to_vec();
        val_idx.sort_unstable();
        train_idx.sort_unstable();
        let pick = |ix: &[usize]| TopicShard {
            topic_id: self.topic_id,
            documents: ix.iter().map(|&i| self.documents[i].clone()).collect(),
        };
        (pick(&train_idx), pick(&val_idx))
    }
}

/// One shard per retained topic, documents in ascending id order. Documents
/// of pruned topics land in no shard.
pub fn shard_corpus(
    corpus: &Corpus,
    assignment: &Assignment,
    model: &TopicModel,
) -> Result<Vec<TopicShard>> {
    let mut shards: Vec<TopicShard> = model
        .retained_topics()
        .map(|t| TopicShard {
            topic_id: t,
            documents: Vec::new(),
        })
        .collect();
    let slot: std::collections::HashMap<usize, usize> =
        shards.iter().enumerate().map(|(i, s)| (s.topic_id, i)).collect();
    for doc in corpus.documents() {
        let topic = assignment
            .topic_of(doc.doc_id)
            .ok_or_else(|| Error::Invalid(format!("doc {} has no topic assignment", doc.doc_id)))?;
        if topic >= model.k {
            return Err(Error::Invalid(format!(
                "doc {} assigned to topic {topic}, model has {}",
                doc.doc_id, model.k
            )));
        }
        if let Some(&i) = slot.get(&topic) {
            let mut doc = doc.clone();
            doc.topic_id = Some(topic);
            shards[i].documents.push(doc);
        }
    }
    Ok(shards)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub topic_id: usize,
    pub steps: usize,
    pub tokens_seen: u64,
    pub loss_curve: Vec<f64>,
    pub wall_time_secs: f64,
    pub worker_id: Option<usize>,
}

impl TrainReport {
    /// Mean loss over the first `ceil(10%)` of steps.
    pub fn head_loss(&self) -> f64 {
        let n = self.loss_curve.len().div_ceil(10).max(1);
        mean(&self.loss_curve[..n.min(self.loss_curve.len())])
    }

    /// Mean loss over the last `ceil(10%)` of steps.
    pub fn tail_loss(&self) -> f64 {
        let n = self.loss_curve.len().div_ceil(10).max(1);
        mean(&self.loss_curve[self.loss_curve.len().saturating_sub(n)..])
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_curve.last().copied().unwrap_or(f64::NAN)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Trains one adapter on `shard` against the frozen `base`.
///
/// The shard's documents are shuffled once by a seed derived from the recipe
/// seed and topic, then visited in that order every epoch. The final batch of
/// an epoch may be short; it is trained rather than dropped.
pub fn train_expert(
    base: &BaseModel<f32>,
    shard: &TopicShard,
    recipe: &TrainRecipe,
) -> Result<(LoraAdapter<f32>, TrainReport)> {
    train_expert_observed(base, shard, recipe, &mut |_| {})
}

pub(crate) fn train_expert_observed(
    base: &BaseModel<f32>,
    shard: &TopicShard,
    recipe: &TrainRecipe,
    on_step: &mut dyn FnMut(usize),
) -> Result<(LoraAdapter<f32>, TrainReport)> {
    if !base.is_frozen() {
        return Err(Error::NotFrozen);
    }
    recipe.validate()?;
    if shard.is_empty() {
        return Err(Error::Invalid(format!("shard for topic {} is empty", shard.topic_id)));
    }
    let start = Instant::now();
    let topic = shard.topic_id;
    let mut adapter = init_adapter(base, topic as u64, recipe.rank, recipe.init_seed(topic))?;
    let mut order: Vec<usize> = (0..shard.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(recipe.order_seed(topic)));

    let eff = recipe.effective_batch();
    let total_steps = recipe.steps_for(shard.len());
    let mut opt = AdamW::<f32>::new(recipe.adam());
    let mut grads = adapter.zeros_like();
    let mut losses = Vec::with_capacity(total_steps);
    let mut step = 0;
    for _ in 0..recipe.epochs {
        for batch_idx in order.chunks(eff) {
            on_step(step);
            let batch: Vec<&[u32]> = batch_idx
                .iter()
                .map(|&i| shard.documents[i].token_ids.as_slice())
                .collect();
            let n_pred = predicted_tokens(&batch);
            if n_pred == 0 {
                return Err(Error::Invalid("batch has no predictable tokens".into()));
            }
            grads.fill_zero();
            let mut nll = 0.0;
            for micro in batch.chunks(recipe.micro_batch) {
                nll += accumulate_gradient(
                    base,
                    Some(&adapter),
                    micro,
                    1.0 / n_pred as f64,
                    &mut GradTarget::Lora(&mut grads),
                )?;
            }
            if let Some(max) = recipe.grad_clip {
                clip_grad_norm(&mut grads.slices_mut(), max);
            }
            let lr = cosine_lr(step, total_steps, recipe.lr_max, recipe.lr_min);
            opt.update(adapter.slices_mut(), grads.slices(), lr);
            losses.push(nll / n_pred as f64);
            step += 1;
        }
    }
    let tokens_seen = (shard.total_tokens() * recipe.epochs) as u64;
    adapter.meta.tokens_seen = tokens_seen;
    adapter.meta.final_loss = *losses.last().expect("at least one step") as f32;
    log::info!(
        "topic {topic}: {step} steps, loss {:.4} -> {:.4}",
        losses[0],
        adapter.meta.final_loss
    );
    Ok((
        adapter,
        TrainReport {
            topic_id: topic,
            steps: step,
            tokens_seen,
            loss_curve: losses,
            wall_time_secs: start.elapsed().as_secs_f64(),
            worker_id: None,
        },
    ))
}
