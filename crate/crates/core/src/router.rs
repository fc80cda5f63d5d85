//! Sequence-level routing: embed the whole query, pick the nearest topic
//! centroid, and decide whether an expert or the bare base model serves it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::embedder::{embed, EmbedderConfig};
use crate::error::{Error, Result};
use crate::topic_model::TopicModel;

/// Default cap on query length, in characters.
pub const DEFAULT_MAX_QUERY_CHARS: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoutingMode {
    /// Nearest over all centroids; a pruned winner means no expert.
    #[serde(rename = "fallback")]
    Fallback,
    /// Nearest over retained centroids only.
    #[serde(rename = "always")]
    AlwaysRoute,
}

impl FromStr for RoutingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fallback" => Ok(Self::Fallback),
            "always" => Ok(Self::AlwaysRoute),
            other => Err(Error::InvalidConfig(format!(
                "unknown routing mode {other:?} (expected fallback or always)"
            ))),
        }
    }
}

impl fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fallback => "fallback",
            Self::AlwaysRoute => "always",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub query_id: u64,
    /// Chosen topic. On fallback this is still the nearest centroid, kept
    /// for diagnostics, but no adapter is applied.
    pub topic_id: Option<usize>,
    /// Negative Euclidean distance to the chosen centroid.
    pub similarity: f64,
    pub fallback: bool,
    pub mode: RoutingMode,
}

impl RoutingDecision {
    /// The topic whose adapter serves this query, if any.
    pub fn expert(&self) -> Option<usize> {
        if self.fallback {
            None
        } else {
            self.topic_id
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: u64,
    pub text: String,
}

pub fn load_queries(path: &Path) -> Result<Vec<Query>> {
    binio::read_jsonl(path)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Router<'a> {
    pub model: &'a TopicModel,
    pub embed: &'a EmbedderConfig,
    pub mode: RoutingMode,
    pub max_query_chars: usize,
}

impl<'a> Router<'a> {
    pub fn new(model: &'a TopicModel, embed: &'a EmbedderConfig, mode: RoutingMode) -> Self {
        Self {
            model,
            embed,
            mode,
            max_query_chars: DEFAULT_MAX_QUERY_CHARS,
        }
    }

    pub fn route(&self, query_id: u64, text: &str) -> Result<RoutingDecision> {
        let model = self.model;
        if model.num_retained() == 0 {
            return Err(Error::NoRetainedTopics);
        }
        let text = match text.char_indices().nth(self.max_query_chars) {
            Some((cut, _)) => &text[..cut],
            None => text,
        };
        let v = embed(text, self.embed);
        let (topic, d2, fallback) = match self.mode {
            RoutingMode::Fallback => {
                let (t, d2) = model.nearest_among(&v, 0..model.k)?.expect("k >= 1");
                (t, d2, !model.retained[t])
            }
            RoutingMode::AlwaysRoute => {
                let (t, d2) = model
                    .nearest_among(&v, model.retained_topics())?
                    .expect("a retained topic exists");
                (t, d2, false)
            }
        };
        Ok(RoutingDecision {
            query_id,
            topic_id: Some(topic),
            similarity: -d2.sqrt(),
            fallback: fallback || v.is_degenerate(),
            mode: self.mode,
        })
    }

    /// Routes every query; order of the output matches the input.
    pub fn route_batch(&self, queries: &[Query]) -> Result<(Vec<RoutingDecision>, RoutingStats)> {
        let decisions = queries
            .par_iter()
            .map(|q| self.route(q.id, &q.text))
            .collect::<Result<Vec<_>>>()?;
        let stats = RoutingStats::from_decisions(&decisions);
        Ok((decisions, stats))
    }
}

/// Free-function form of [`Router::route`] with the default length cap.
pub fn route(
    query_id: u64,
    text: &str,
    model: &TopicModel,
    embed: &EmbedderConfig,
    mode: RoutingMode,
) -> Result<RoutingDecision> {
    Router::new(model, embed, mode).route(query_id, text)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutingStats {
    pub queries: usize,
    pub fallbacks: usize,
    /// Distinct topics chosen, fallbacks included.
    pub unique_topics: usize,
    /// Distinct adapters actually applied.
    pub unique_adapters: usize,
    /// Queries per chosen topic, fallbacks included.
    pub histogram: BTreeMap<usize, usize>,
}

impl RoutingStats {
    pub fn from_decisions(decisions: &[RoutingDecision]) -> Self {
        let mut s = Self {
            queries: decisions.len(),
            ..Default::default()
        };
        let mut adapters = BTreeSet::new();
        for d in decisions {
            if d.fallback {
                s.fallbacks += 1;
            }
            if let Some(t) = d.topic_id {
                *s.histogram.entry(t).or_default() += 1;
            }
            if let Some(t) = d.expert() {
                adapters.insert(t);
            }
        }
        s.unique_topics = s.histogram.len();
        s.unique_adapters = adapters.len();
        s
    }
}

pub fn save_decisions(decisions: &[RoutingDecision], path: &Path) -> Result<()> {
    binio::write_jsonl_atomic(path, decisions)
}

pub fn load_decisions(path: &Path) -> Result<Vec<RoutingDecision>> {
    binio::read_jsonl(path)
}

pub const BASE_LABEL: &str = "BASE (no expert)";

/// One row of a query-to-topic inspection table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inspection {
    pub query_id: u64,
    pub excerpt: String,
    /// `topic N` or [`BASE_LABEL`].
    pub expert: String,
    pub keywords: Vec<String>,
    pub similarity: f64,
}

const EXCERPT_CHARS: usize = 60;

fn excerpt(text: &str) -> String {
    let flat: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    match flat.char_indices().nth(EXCERPT_CHARS) {
        Some((cut, _)) => format!("{}...", &flat[..cut]),
        None => flat,
    }
}

/// Pairs a decision with its query text and the chosen topic's keywords.
/// Fallback rows show the nearest topic's keywords under the base label.
pub fn inspect(decision: &RoutingDecision, query_text: &str, model: &TopicModel) -> Inspection {
    let expert = match decision.expert() {
        Some(t) => format!("topic {t}"),
        None => BASE_LABEL.to_string(),
    };
    let keywords = decision
        .topic_id
        .filter(|&t| t < model.k)
        .map(|t| model.keywords_of(t).to_vec())
        .unwrap_or_default();
    Inspection {
        query_id: decision.query_id,
        excerpt: excerpt(query_text),
        expert,
        keywords,
        similarity: decision.similarity,
    }
}

pub fn render_inspections(rows: &[Inspection]) -> String {
    let mut out = String::from("| Query | Expert | Topic keywords | Similarity |\n|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {:.4} |\n",
            r.excerpt.replace('|', "\\|"),
            r.expert,
            r.keywords.join(", "),
            r.similarity
        ));
    }
    out
}
