//! Cross-entropy loss, document windows and perplexity.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::{BaseModel, Scalar};
use crate::error::{Error, Result};
use crate::lora::LoraAdapter;

/// Target value for padded positions; excluded from loss and gradient.
pub const IGNORE_INDEX: u32 = u32::MAX;

pub fn log_softmax_rows<T: Scalar>(logits: ArrayView2<T>) -> Array2<T> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

fn check_targets<T: Scalar>(logits: &ArrayView2<T>, targets: &[u32]) -> Result<()> {
    if logits.nrows() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows vs {} targets",
            logits.nrows(),
            targets.len()
        )));
    }
    if let Some(&t) = targets
        .iter()
        .find(|&&t| t != IGNORE_INDEX && t as usize >= logits.ncols())
    {
        return Err(Error::ShapeMismatch(format!("target {t} outside vocabulary")));
    }
    Ok(())
}

/// Summed negative log-likelihood and number of scored positions.
fn nll_sum<T: Scalar>(logits: ArrayView2<T>, targets: &[u32]) -> Result<(f64, usize)> {
    check_targets(&logits, targets)?;
    let logp = log_softmax_rows(logits);
    let mut total = 0.0;
    let mut count = 0;
    for (row, &t) in logp.rows().into_iter().zip(targets) {
        if t != IGNORE_INDEX {
            total -= row[t as usize].as_f64();
            count += 1;
        }
    }
    Ok((total, count))
}

/// Mean token cross-entropy over positions whose target is not [`IGNORE_INDEX`].
pub fn lm_loss<T: Scalar>(logits: ArrayView2<T>, targets: &[u32]) -> Result<f64> {
    let (total, count) = nll_sum(logits, targets)?;
    if count == 0 {
        return Err(Error::Invalid("no scored positions".into()));
    }
    Ok(total / count as f64)
}

/// Summed NLL plus `d(scale · Σ nll)/d logits`.
pub fn lm_loss_grad<T: Scalar>(
    logits: ArrayView2<T>,
    targets: &[u32],
    scale: T,
) -> Result<(f64, Array2<T>)> {
    check_targets(&logits, targets)?;
    let mut grad = log_softmax_rows(logits);
    let mut total = 0.0;
    for (mut row, &t) in grad.rows_mut().into_iter().zip(targets) {
        if t == IGNORE_INDEX {
            row.fill(T::zero());
            continue;
        }
        total -= row[t as usize].as_f64();
        row.mapv_inplace(|lp| lp.exp() * scale);
        row[t as usize] -= scale;
    }
    Ok((total, grad))
}

/// Splits a document into `(input, target)` windows of at most `context_len`
/// positions. Windows do not overlap in targets, so every token after the
/// first is predicted exactly once.
pub fn windows(tokens: &[u32], context_len: usize) -> Vec<(&[u32], &[u32])> {
    let n = tokens.len();
    if n < 2 {
        return Vec::new();
    }
    (0..n - 1)
        .step_by(context_len)
        .map(|start| {
            let end = (start + context_len).min(n - 1);
            (&tokens[start..end], &tokens[start + 1..end + 1])
        })
        .collect()
}

/// Summed NLL and predicted-token count of one document.
pub fn document_nll<T: Scalar>(
    model: &BaseModel<T>,
    adapter: Option<&LoraAdapter<T>>,
    tokens: &[u32],
) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut count = 0;
    for (input, target) in windows(tokens, model.config.context_len) {
        let logits = model.forward(adapter, input)?;
        let (nll, c) = nll_sum(logits.view(), target)?;
        total += nll;
        count += c;
    }
    Ok((total, count))
}

/// `exp(total NLL / total predicted tokens)` over independent documents.
/// Per-document sums are reduced in input order.
pub fn perplexity<T: Scalar>(
    model: &BaseModel<T>,
    adapter: Option<&LoraAdapter<T>>,
    docs: &[&[u32]],
) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::Invalid("perplexity of an empty document set".into()));
    }
    let per_doc = docs
        .par_iter()
        .map(|d| document_nll(model, adapter, d))
        .collect::<Result<Vec<_>>>()?;
    let (nll, count) = per_doc
        .iter()
        .fold((0.0, 0usize), |(a, b), &(n, c)| (a + n, b + c));
    if count == 0 {
        return Err(Error::Invalid("documents contain no predictable tokens".into()));
    }
    Ok((nll / count as f64).exp())
}
