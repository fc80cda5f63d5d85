//! Routed evaluation: corpus perplexity, zero-shot multiple choice,
//! per-expert perplexity, the expert-by-topic cross matrix and the
//! documents-per-topic histogram.
//!
//! Every aggregate is computed per item in parallel and then summed in input
//! order, so results do not depend on the thread count.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use ndarray::s;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, McItem, BOS};
use crate::embedder::EmbedderConfig;
use crate::error::{Error, Result};
use crate::lm::{document_nll, log_softmax_rows, BaseModel};
use crate::lora::LoraAdapter;
use crate::registry::AdapterRegistry;
use crate::router::{Router, RoutingDecision, RoutingMode};
use crate::topic_model::{Assignment, TopicModel};
use crate::trainer::TopicShard;

/// Which model serves each query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    BaseOnly,
    Fallback,
    AlwaysRoute,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::BaseOnly, Variant::Fallback, Variant::AlwaysRoute];

    pub fn mode(self) -> Option<RoutingMode> {
        match self {
            Variant::BaseOnly => None,
            Variant::Fallback => Some(RoutingMode::Fallback),
            Variant::AlwaysRoute => Some(RoutingMode::AlwaysRoute),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::BaseOnly => "base-only",
            Variant::Fallback => "fallback",
            Variant::AlwaysRoute => "always-route",
        })
    }
}

/// Everything needed to serve a query: base, adapters and the router inputs.
#[derive(Clone, Copy)]
pub struct Experts<'a> {
    pub base: &'a BaseModel<f32>,
    pub registry: &'a AdapterRegistry,
    pub topics: &'a TopicModel,
    pub embed: &'a EmbedderConfig,
}

impl<'a> Experts<'a> {
    /// Routing decision (none for base-only) and the adapter to apply. A
    /// routed topic without a trained adapter is served by the base model.
    fn select(
        &self,
        variant: Variant,
        query_id: u64,
        text: &str,
    ) -> Result<(Option<RoutingDecision>, Option<&'a LoraAdapter<f32>>)> {
        let Some(mode) = variant.mode() else {
            return Ok((None, None));
        };
        let d = Router::new(self.topics, self.embed, mode).route(query_id, text)?;
        let adapter = d.expert().and_then(|t| self.registry.get(t));
        Ok((Some(d), adapter))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityResult {
    pub variant: Variant,
    pub perplexity: f64,
    pub nll: f64,
    pub tokens: usize,
    /// Documents scored with an adapter.
    pub routed_docs: usize,
    pub unique_adapters: usize,
}

/// Routes each document by its full text and scores it under the chosen
/// adapter. Perplexity is `exp(total NLL / total predicted tokens)`.
pub fn eval_perplexity(experts: &Experts<'_>, corpus: &Corpus, variant: Variant) -> Result<PerplexityResult> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus("validation"));
    }
    let per_doc = corpus
        .documents()
        .par_iter()
        .map(|d| {
            let (_, adapter) = experts.select(variant, d.doc_id, &d.text)?;
            let (nll, n) = document_nll(experts.base, adapter, &d.token_ids)?;
            Ok((nll, n, adapter.map(|a| a.topic_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut nll = 0.0;
    let mut tokens = 0;
    let mut used = BTreeSet::new();
    let mut routed_docs = 0;
    for (n, c, topic) in per_doc {
        nll += n;
        tokens += c;
        if let Some(t) = topic {
            used.insert(t);
            routed_docs += 1;
        }
    }
    if tokens == 0 {
        return Err(Error::Invalid("no predictable tokens".into()));
    }
    Ok(PerplexityResult {
        variant,
        perplexity: (nll / tokens as f64).exp(),
        nll,
        tokens,
        routed_docs,
        unique_adapters: used.len(),
    })
}

/// Mean log-probability of `option` given `prompt`. The prompt is encoded
/// as `[BOS, bytes...]` with no end marker and the option's bytes follow
/// directly. Each option token sees as much preceding text as fits in the
/// context window, so long prompts are cut from the left and options longer
/// than the window are scored in consecutive chunks.
pub fn option_score(
    base: &BaseModel<f32>,
    adapter: Option<&LoraAdapter<f32>>,
    prompt: &str,
    option: &str,
) -> Result<f64> {
    if option.is_empty() {
        return Err(Error::Invalid("empty option".into()));
    }
    let ctx = base.config.context_len;
    let seq: Vec<u32> = std::iter::once(BOS)
        .chain(prompt.bytes().map(u32::from))
        .chain(option.bytes().map(u32::from))
        .collect();
    let n = seq.len();
    let first = n - option.len();
    let mut total = 0.0;
    let mut t = first;
    while t < n {
        // Targets t..end are predicted by inputs lo..end-1.
        let end = (t + ctx).min(n);
        let lo = (end - 1).saturating_sub(ctx);
        let logits = base.forward(adapter, &seq[lo..end - 1])?;
        let logp = log_softmax_rows(logits.slice(s![t - 1 - lo.., ..]));
        total += (t..end)
            .map(|p| f64::from(logp[[p - t, seq[p] as usize]]))
            .sum::<f64>();
        t = end;
    }
    Ok(total / option.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McPrediction {
    pub item_id: u64,
    pub predicted: usize,
    pub gold: usize,
    pub scores: Vec<f64>,
    pub decision: Option<RoutingDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub variant: Variant,
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub unique_adapters: usize,
    pub predictions: Vec<McPrediction>,
}

/// Zero-shot multiple choice. Routing sees only the prompt; the prediction
/// is the option with the highest length-normalized log-likelihood, ties to
/// the lowest index.
pub fn eval_mc(experts: &Experts<'_>, items: &[McItem], variant: Variant) -> Result<McResult> {
    for it in items {
        it.validate()?;
    }
    let predictions = items
        .par_iter()
        .map(|it| {
            let (decision, adapter) = experts.select(variant, it.item_id, &it.prompt)?;
            let scores = it
                .options
                .iter()
                .map(|o| option_score(experts.base, adapter, &it.prompt, o))
                .collect::<Result<Vec<_>>>()?;
            let mut predicted = 0;
            for (i, &s) in scores.iter().enumerate() {
                if s > scores[predicted] {
                    predicted = i;
                }
            }
            Ok(McPrediction {
                item_id: it.item_id,
                predicted,
                gold: it.gold_index,
                scores,
                decision,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let correct = predictions.iter().filter(|p| p.predicted == p.gold).count();
    let unique: BTreeSet<usize> = predictions
        .iter()
        .filter_map(|p| p.decision.as_ref()?.expert())
        .filter(|&t| experts.registry.get(t).is_some())
        .collect();
    Ok(McResult {
        variant,
        accuracy: if items.is_empty() {
            0.0
        } else {
            correct as f64 / items.len() as f64
        },
        correct,
        total: items.len(),
        unique_adapters: unique.len(),
        predictions,
    })
}

fn shard_perplexity(
    base: &BaseModel<f32>,
    adapter: Option<&LoraAdapter<f32>>,
    shard: &TopicShard,
) -> Result<f64> {
    let (nll, n) = shard
        .documents
        .iter()
        .map(|d| document_nll(base, adapter, &d.token_ids))
        .try_fold((0.0, 0usize), |(a, b), r| r.map(|(n, c)| (a + n, b + c)))?;
    if n == 0 {
        return Err(Error::Invalid(format!("held-out shard {} has no tokens", shard.topic_id)));
    }
    Ok((nll / n as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertPerplexity {
    pub topic_id: usize,
    pub perplexity: f64,
    pub base_perplexity: f64,
    pub docs: usize,
}

/// Each expert on its own held-out slice, sorted ascending by perplexity.
/// Experts without an adapter or without held-out documents are skipped.
pub fn per_expert_perplexity(
    base: &BaseModel<f32>,
    registry: &AdapterRegistry,
    held_out: &[TopicShard],
) -> Result<Vec<ExpertPerplexity>> {
    let usable: Vec<(&TopicShard, &LoraAdapter<f32>)> = held_out
        .iter()
        .filter_map(|s| {
            let adapter = registry.get(s.topic_id);
            if adapter.is_none() {
                log::warn!("topic {}: no adapter, skipped", s.topic_id);
            } else if s.is_empty() {
                log::warn!("topic {}: no held-out documents, skipped", s.topic_id);
            }
            adapter.filter(|_| !s.is_empty()).map(|a| (s, a))
        })
        .collect();
    let mut out = usable
        .par_iter()
        .map(|&(s, a)| {
            Ok(ExpertPerplexity {
                topic_id: s.topic_id,
                perplexity: shard_perplexity(base, Some(a), s)?,
                base_perplexity: shard_perplexity(base, None, s)?,
                docs: s.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.perplexity.total_cmp(&b.perplexity).then(a.topic_id.cmp(&b.topic_id)));
    Ok(out)
}

/// `values[i][j]` is expert `topics[i]` on the held-out slice of `topics[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossMatrix {
    pub topics: Vec<usize>,
    pub values: Vec<Vec<f64>>,
    pub base: Vec<f64>,
}

impl CrossMatrix {
    fn argmin(xs: impl Iterator<Item = f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, x) in xs.enumerate() {
            if x < best.1 {
                best = (i, x);
            }
        }
        best.0
    }

    /// Fraction of experts whose best topic is their own.
    pub fn row_diagonal_fraction(&self) -> f64 {
        let n = self.topics.len();
        if n == 0 {
            return 0.0;
        }
        let hits = (0..n)
            .filter(|&i| Self::argmin(self.values[i].iter().copied()) == i)
            .count();
        hits as f64 / n as f64
    }

    /// Fraction of topics whose best expert is their own.
    pub fn column_diagonal_fraction(&self) -> f64 {
        let n = self.topics.len();
        if n == 0 {
            return 0.0;
        }
        let hits = (0..n)
            .filter(|&j| Self::argmin((0..n).map(|i| self.values[i][j])) == j)
            .count();
        hits as f64 / n as f64
    }

    /// Fraction of ordered pairs `(i, j)`, `i != j`, where expert `j` beats
    /// expert `i` on topic `j`.
    pub fn matched_pair_fraction(&self) -> f64 {
        let n = self.topics.len();
        if n < 2 {
            return 1.0;
        }
        let mut wins = 0;
        for j in 0..n {
            for i in 0..n {
                if i != j && self.values[j][j] < self.values[i][j] {
                    wins += 1;
                }
            }
        }
        wins as f64 / (n * (n - 1)) as f64
    }

    pub fn render(&self) -> String {
        let mut s = String::from("expert\\topic");
        for t in &self.topics {
            let _ = write!(s, " {t:>8}");
        }
        s.push('\n');
        for (i, row) in self.values.iter().enumerate() {
            let _ = write!(s, "{:>12}", self.topics[i]);
            for (j, v) in row.iter().enumerate() {
                let mark = if i == j { '*' } else { ' ' };
                let _ = write!(s, " {v:>7.3}{mark}");
            }
            s.push('\n');
        }
        let _ = write!(s, "{:>12}", "base");
        for v in &self.base {
            let _ = write!(s, " {v:>7.3} ");
        }
        s.push('\n');
        s
    }
}

/// Every expert on every topic's held-out slice. Topics without an adapter
/// or held-out documents are left out.
pub fn cross_perplexity(
    base: &BaseModel<f32>,
    registry: &AdapterRegistry,
    held_out: &[TopicShard],
) -> Result<CrossMatrix> {
    let shards: Vec<&TopicShard> = held_out
        .iter()
        .filter(|s| !s.is_empty() && registry.get(s.topic_id).is_some())
        .collect();
    let n = shards.len();
    let cells = (0..n * (n + 1))
        .into_par_iter()
        .map(|c| {
            let (i, j) = (c / n, c % n);
            let adapter = if i == n {
                None
            } else {
                registry.get(shards[i].topic_id)
            };
            shard_perplexity(base, adapter, shards[j])
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut rows: Vec<Vec<f64>> = cells.chunks(n.max(1)).map(<[f64]>::to_vec).collect();
    let base_row = if n == 0 { Vec::new() } else { rows.pop().expect("base row") };
    Ok(CrossMatrix {
        topics: shards.iter().map(|s| s.topic_id).collect(),
        values: if n == 0 { Vec::new() } else { rows },
        base: base_row,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicHistogram {
    pub counts: Vec<u64>,
    pub retained: Vec<bool>,
}

impl TopicHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// One bar per topic, scaled to `width` characters, pruned topics marked.
    pub fn render_text(&self, width: usize) -> String {
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1);
        let mut s = String::new();
        for (t, (&c, &kept)) in self.counts.iter().zip(&self.retained).enumerate() {
            let bar = "#".repeat(((c as f64 / max as f64) * width as f64).round() as usize);
            let flag = if kept { "" } else { "  (pruned)" };
            let _ = writeln!(s, "topic {t:>4} | {c:>6} {bar}{flag}");
        }
        s
    }
}

/// Training documents per topic, with the retained mask.
pub fn docs_per_topic(assignment: &Assignment, model: &TopicModel) -> TopicHistogram {
    TopicHistogram {
        counts: assignment.counts(model.k),
        retained: model.retained.clone(),
    }
}

/// Sorted per-expert perplexities as a text bar chart; the worst tenth is
/// flagged so underperforming experts stand out.
pub fn render_expert_curve(rows: &[ExpertPerplexity], width: usize) -> String {
    let max = rows.iter().map(|r| r.perplexity).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let tail = rows.len().div_ceil(10);
    let mut s = String::new();
    for (rank, r) in rows.iter().enumerate() {
        let bar = "#".repeat(((r.perplexity / max) * width as f64).round() as usize);
        let flag = if rank >= rows.len() - tail { "  <- tail" } else { "" };
        let _ = writeln!(
            s,
            "{rank:>4} topic {:>4} | {:>8.3} (base {:>8.3}) {bar}{flag}",
            r.topic_id, r.perplexity, r.base_perplexity
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Split};
    use crate::lm::BaseModelConfig;
    use crate::lora::init_adapter;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};

    fn base() -> BaseModel<f32> {
        BaseModel::init(BaseModelConfig {
            d_model: 16,
            n_heads: 2,
            n_layers: 1,
            mlp_hidden: 16,
            context_len: 24,
            ..Default::default()
        })
        .unwrap()
    }

    fn topics() -> TopicModel {
        TopicModel {
            k: 2,
            dim: 8,
            centroids: (0..16).map(|i| if i % 9 == 0 { 1.0 } else { 0.0 }).collect(),
            doc_counts: vec![3, 1],
            retained: vec![true, false],
            keywords: None,
            kmeans_seed: 0,
        }
    }

    fn noisy_adapter(b: &BaseModel<f32>, topic: u64) -> LoraAdapter<f32> {
        let mut a = init_adapter(b, topic, 2, topic).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(topic);
        for s in a.slices_mut() {
            for v in s.iter_mut() {
                *v = rng.random_range(-0.3..0.3);
            }
        }
        a
    }

    fn corpus() -> Corpus {
        let docs = (0..6)
            .map(|i| Document::new(i, format!("document number {i} with text that runs past the window")))
            .collect();
        Corpus::new(docs, Split::Validation).unwrap()
    }

    fn mc() -> Vec<McItem> {
        (0..4)
            .map(|i| McItem {
                item_id: i,
                prompt: format!("prompt {i}"),
                options: vec![" yes".into(), " no".into(), " maybe".into()],
                gold_index: (i % 3) as usize,
            })
            .collect()
    }

    #[test]
    fn empty_registry_fallback_equals_base_bitwise() {
        let b = base();
        let reg = AdapterRegistry::empty();
        let tm = topics();
        let ec = EmbedderConfig {
            dimension: 8,
            ..Default::default()
        };
        let ex = Experts {
            base: &b,
            registry: &reg,
            topics: &tm,
            embed: &ec,
        };
        let c = corpus();
        let p0 = eval_perplexity(&ex, &c, Variant::BaseOnly).unwrap();
        let p1 = eval_perplexity(&ex, &c, Variant::Fallback).unwrap();
        assert_eq!(p0.perplexity.to_bits(), p1.perplexity.to_bits());
        assert_eq!(p1.routed_docs, 0);
        let m0 = eval_mc(&ex, &mc(), Variant::BaseOnly).unwrap();
        let m1 = eval_mc(&ex, &mc(), Variant::Fallback).unwrap();
        assert_eq!(m0.accuracy, m1.accuracy);
        for (a, b) in m0.predictions.iter().zip(&m1.predictions) {
            assert_eq!(a.scores, b.scores);
        }
        // Perplexity over a corpus agrees with the lm helper.
        let docs: Vec<&[u32]> = c.documents().iter().map(|d| d.token_ids.as_slice()).collect();
        let direct = crate::lm::perplexity(&b, None, &docs).unwrap();
        assert_eq!(direct.to_bits(), p0.perplexity.to_bits());
    }

    #[test]
    fn adapters_change_routed_scores() {
        let b = base();
        let reg = AdapterRegistry::from_adapters([noisy_adapter(&b, 0)]).unwrap();
        let tm = topics();
        let ec = EmbedderConfig {
            dimension: 8,
            ..Default::default()
        };
        let ex = Experts {
            base: &b,
            registry: &reg,
            topics: &tm,
            embed: &ec,
        };
        let c = corpus();
        let p0 = eval_perplexity(&ex, &c, Variant::BaseOnly).unwrap();
        let p2 = eval_perplexity(&ex, &c, Variant::AlwaysRoute).unwrap();
        assert_eq!(p2.routed_docs, c.len());
        assert_eq!(p2.unique_adapters, 1);
        assert_ne!(p0.perplexity, p2.perplexity);
        assert!(p0.perplexity >= 1.0 && p2.perplexity >= 1.0);
        let m = eval_mc(&ex, &mc(), Variant::AlwaysRoute).unwrap();
        assert!((0.0..=1.0).contains(&m.accuracy));
        assert_eq!(m.unique_adapters, 1);
        assert!(m.predictions.iter().all(|p| p.decision.as_ref().unwrap().mode == RoutingMode::AlwaysRoute));
    }

    #[test]
    fn identical_options_pick_first() {
        let b = base();
        let reg = AdapterRegistry::empty();
        let tm = topics();
        let ec = EmbedderConfig {
            dimension: 8,
            ..Default::default()
        };
        let ex = Experts {
            base: &b,
            registry: &reg,
            topics: &tm,
            embed: &ec,
        };
        let item = McItem {
            item_id: 0,
            prompt: "p".into(),
            options: vec![" same".into(), " same".into()],
            gold_index: 1,
        };
        let r = eval_mc(&ex, &[item], Variant::BaseOnly).unwrap();
        assert_eq!(r.predictions[0].predicted, 0);
        assert_eq!(r.accuracy, 0.0);
    }

    #[test]
    fn uniform_model_scores_are_length_invariant() {
        let mut b = base();
        b.params.head = Array2::zeros(b.params.head.raw_dim());
        let one = option_score(&b, None, "prompt", " abc").unwrap();
        let two = option_score(&b, None, "prompt", " abc abc").unwrap();
        assert_eq!(one, two);
        assert!((one + 258f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn long_prompt_is_left_truncated() {
        let b = base();
        let long = "x".repeat(200);
        let a = option_score(&b, None, &long, " yes").unwrap();
        // Window of 25 tokens: 21 prompt bytes then the 4 option bytes.
        let tail = &long[long.len() - 21..];
        let same = option_score(&b, None, &format!("yy{tail}"), " yes").unwrap();
        assert_eq!(a, same);
    }

    #[test]
    fn option_longer_than_window_is_chunked() {
        let b = base();
        let opt = "z".repeat(60);
        let got = option_score(&b, None, "p", &opt).unwrap();
        // Oracle: every option byte scored from its own maximal left window.
        let seq: Vec<u32> = std::iter::once(BOS).chain("p".bytes().chain(opt.bytes()).map(u32::from)).collect();
        let ctx = b.config.context_len;
        let mut chunks = Vec::new();
        let mut t = 2;
        while t < seq.len() {
            let end = (t + ctx).min(seq.len());
            chunks.push((t, end));
            t = end;
        }
        let mut total = 0.0;
        for (t, end) in chunks {
            let lo = (end - 1).saturating_sub(ctx);
            let logits = b.forward(None, &seq[lo..end - 1]).unwrap();
            for p in t..end {
                let row = logits.row(p - 1 - lo);
                let m = row.iter().fold(f32::NEG_INFINITY, |a, &x| a.max(x));
                let lse = f64::from(m) + row.iter().map(|&x| f64::from(x - m).exp()).sum::<f64>().ln();
                total += f64::from(row[seq[p] as usize]) - lse;
            }
        }
        assert!((got - total / 60.0).abs() < 1e-5, "{got} vs {}", total / 60.0);
    }

    #[test]
    fn expert_tables() {
        let b = base();
        let reg = AdapterRegistry::from_adapters([noisy_adapter(&b, 0), noisy_adapter(&b, 1)]).unwrap();
        let held: Vec<TopicShard> = (0..3)
            .map(|t| TopicShard {
                topic_id: t,
                documents: if t == 1 {
                    Vec::new()
                } else {
                    vec![Document::new(t as u64, format!("held out {t}"))]
                },
            })
            .collect();
        let rows = per_expert_perplexity(&b, &reg, &held).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].topic_id, 0);
        let single = per_expert_perplexity(&b, &reg, &held[..1]).unwrap();
        assert_eq!(single.len(), 1);
        assert!(render_expert_curve(&rows, 20).contains("tail"));

        let both: Vec<TopicShard> = (0..2)
            .map(|t| TopicShard {
                topic_id: t,
                documents: vec![Document::new(t as u64, format!("text for topic {t}"))],
            })
            .collect();
        let m = cross_perplexity(&b, &reg, &both).unwrap();
        assert_eq!(m.topics, vec![0, 1]);
        assert_eq!(m.values.len(), 2);
        assert_eq!(m.base.len(), 2);
        let expected = shard_perplexity(&b, reg.get(1), &both[0]).unwrap();
        assert_eq!(m.values[1][0], expected);
        assert!(m.render().contains('*'));
        let empty = cross_perplexity(&b, &AdapterRegistry::empty(), &both).unwrap();
        assert!(empty.topics.is_empty() && empty.base.is_empty());
    }

    #[test]
    fn diagonal_fractions() {
        let m = CrossMatrix {
            topics: vec![0, 1, 2],
            values: vec![vec![1.0, 2.0, 3.0], vec![0.5, 1.5, 3.0], vec![3.0, 3.0, 2.0]],
            base: vec![4.0; 3],
        };
        assert!((m.row_diagonal_fraction() - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.column_diagonal_fraction() - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.matched_pair_fraction() - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_counts_and_flags() {
        let docs: Vec<Document> = (0..5).map(|i| Document::new(i, "x")).collect();
        let c = Corpus::new(docs, Split::Train).unwrap();
        let a = Assignment::from_labels(&c, &[0, 0, 1, 0, 0]).unwrap();
        let h = docs_per_topic(&a, &topics());
        assert_eq!(h.counts, vec![4, 1]);
        assert_eq!(h.total(), 5);
        let text = h.render_text(10);
        assert!(text.lines().nth(1).unwrap().ends_with("(pruned)"));
        let back: TopicHistogram = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
        assert_eq!(back, h);
    }
}
