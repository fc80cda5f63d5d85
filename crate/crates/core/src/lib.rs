//! Mixture of introvert experts.
//!
//! Upcycles a frozen base language model with one low-rank adapter per
//! topic. A corpus is embedded and clustered with K-means; each retained
//! cluster trains its own adapter with no communication between training
//! runs; queries are routed to a single expert by nearest-centroid search.
//! A discrete-event simulator models serving the experts from per-node
//! adapter caches.
//!
//! The pipeline, module by module:
//!
//! | step | module |
//! |------|--------|
//! | corpus ingest, byte tokenizer, planted-topic generator | [`corpus`], [`synthetic`] |
//! | document / query embedding | [`embedder`] |
//! | K-means topics, pruning, c-TF-IDF keywords | [`topic_model`] |
//! | toy decoder-only base model | [`lm`] |
//! | adapter algebra and files | [`lora`] |
//! | per-topic training and the worker pool | [`trainer`] |
//! | loaded adapters keyed by topic | [`registry`] |
//! | query routing | [`router`] |
//! | multi-node serving simulation | [`serving`] |
//! | perplexity / multiple-choice evaluation and reports | [`eval`] |
//! | on-disk workspace used by the `moin` binary | [`pipeline`] |

pub mod corpus;
pub mod embedder;
pub mod error;
pub mod eval;
pub mod hashing;
pub mod lm;
pub mod lora;
pub mod pipeline;
pub mod registry;
pub mod router;
pub mod serving;
pub mod synthetic;
pub mod topic_model;
pub mod trainer;

mod binio;

pub use error::{Error, Result};
