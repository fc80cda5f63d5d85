use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    clip_grad_norm, cosine_lr, lm_loss_grad, windows, AdamW, AdamWParams, BaseModel, BaseParams,
    GradTarget, Scalar,
};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::lora::LoraAdapter;

/// Adds `scale * d(sum of token NLL over docs)` into `target`; returns the NLL sum.
pub fn accumulate_gradient<T: Scalar>(
    model: &BaseModel<T>,
    adapter: Option<&LoraAdapter<T>>,
    docs: &[&[u32]],
    scale: f64,
    target: &mut GradTarget<'_, T>,
) -> Result<f64> {
    let ctx = model.config.context_len;
    let scale = T::lit(scale);
    let mut nll = 0.0;
    for doc in docs {
        for (input, tgt) in windows(doc, ctx) {
            let (logits, cache) = model.forward_cached(adapter, input)?;
            let (sum, dlogits) = lm_loss_grad(logits.view(), tgt, scale)?;
            nll += sum;
            model.backward(adapter, &cache, dlogits.view(), target)?;
        }
    }
    Ok(nll)
}

/// Number of next-token predictions a document contributes.
pub fn predicted_tokens(docs: &[&[u32]]) -> usize {
    docs.iter().map(|d| d.len().saturating_sub(1)).sum()
}

/// Accumulates the gradient of the mean token loss over `docs` into `target`
/// and returns `(mean loss, predicted tokens)`.
pub fn batch_gradient<T: Scalar>(
    model: &BaseModel<T>,
    adapter: Option<&LoraAdapter<T>>,
    docs: &[&[u32]],
    target: &mut GradTarget<'_, T>,
) -> Result<(f64, usize)> {
    let total = predicted_tokens(docs);
    if total == 0 {
        return Err(Error::Invalid("batch has no predictable tokens".into()));
    }
    let nll = accumulate_gradient(model, adapter, docs, 1.0 / total as f64, target)?;
    Ok((nll / total as f64, total))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PretrainConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    pub batch_docs: usize,
    pub adam: AdamWParams,
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            lr_max: 3e-3,
            lr_min: 3e-4,
            batch_docs: 16,
            adam: AdamWParams::default(),
            grad_clip: Some(1.0),
            seed: 0,
        }
    }
}

/// Full-parameter autoregressive training for `steps` optimizer steps.
/// Documents are visited in epochs, each shuffled by the config seed.
/// Returns the per-step mean loss.
pub fn pretrain_base<T: Scalar>(
    model: &mut BaseModel<T>,
    corpus: &Corpus,
    steps: usize,
    cfg: &PretrainConfig,
) -> Result<Vec<f64>> {
    if model.is_frozen() {
        return Err(Error::Frozen);
    }
    if cfg.batch_docs == 0 || cfg.lr_min > cfg.lr_max {
        return Err(Error::InvalidConfig("need batch_docs >= 1 and lr_min <= lr_max".into()));
    }
    if steps == 0 {
        return Ok(Vec::new());
    }
    let docs: Vec<&[u32]> = corpus
        .documents()
        .iter()
        .map(|d| d.token_ids.as_slice())
        .filter(|t| t.len() >= 2)
        .collect();
    if docs.is_empty() {
        return Err(Error::EmptyCorpus("train"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut opt = AdamW::<T>::new(cfg.adam);
    let mut grads = BaseParams::<T>::zeros(&model.config);
    let mut losses = Vec::with_capacity(steps);

    for step in 0..steps {
        let mut batch = Vec::with_capacity(cfg.batch_docs);
        while batch.len() < cfg.batch_docs {
            if cursor == order.len() {
                order = (0..docs.len()).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(docs[order[cursor]]);
            cursor += 1;
        }
        grads.fill_zero();
        let (loss, _) = batch_gradient(model, None, &batch, &mut GradTarget::Base(&mut grads))?;
        if let Some(max) = cfg.grad_clip {
            clip_grad_norm(&mut grads.slices_mut(), max);
        }
        let lr = cosine_lr(step, steps, cfg.lr_max, cfg.lr_min);
        opt.update(model.params.slices_mut(), grads.slices(), lr);
        losses.push(loss);
        log::debug!("pretrain step {step}: loss {loss:.4} lr {lr:.2e}");
    }
    Ok(losses)
}
