//! Query-aware paged KV cache, desk scale.
//!
//! A decode step over a long context spends most of its time reading cached
//! keys and values. This crate models and exercises the structured
//! alternative: cache tokens in fixed-size pages, keep per-page bounding-box
//! metadata over the keys, score pages against the current query, and attend
//! only over the top-ranked pages.
//!
//! Modules:
//! - [`paged_kv`]: the paged store with incrementally maintained metadata;
//! - [`selection`]: page scoring, top-K selection, and baseline strategies;
//! - [`attention`]: exact full attention (the oracle) and sparse attention;
//! - [`cost_model`]: analytic latency/memory models and gap measurement;
//! - [`engine`]: the per-step decode pipeline and session replay;
//! - [`workload`]: trace generation, trace files, Poisson arrivals, and the
//!   multi-session serving simulator.
//!
//! Everything is deterministic given a seed; see [`workload::rng`].

pub mod attention;
pub mod cost_model;
pub mod engine;
pub mod error;
pub mod numeric;
pub mod paged_kv;
pub mod selection;
pub mod workload;

pub use error::{Error, Result};
pub use numeric::Precision;
pub use paged_kv::{CacheConfig, KvPage, PageMetadata, PagedKvCache};
pub use selection::{PageBudget, SelectionPolicy, SelectionResult};
