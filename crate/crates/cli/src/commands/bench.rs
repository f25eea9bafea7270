//! The `bench` command: wall-clock micro-timing of the three hot paths
//! (page scoring, gather, sparse attention). Informational only; the timings
//! are real elapsed time and therefore the one output that is not a pure
//! function of the seed.

use std::time::Instant;

use serde::Serialize;

use tinykv_core::attention::sparse_attention;
use tinykv_core::error::Result;
use tinykv_core::paged_kv::PagedKvCache;
use tinykv_core::selection::{score_all, select, PageBudget, SelectionPolicy};
use tinykv_core::workload::rng::{derive_seed, SplitMix64};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub pages: usize,
    pub tokens: usize,
    pub dim: usize,
    pub iters: usize,
    pub score_all_ns: f64,
    pub gather_ns: f64,
    pub sparse_attention_ns: f64,
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn render(&self) -> String {
        format!(
            "micro-timing over {} pages x {} dims ({} iterations)\n\
             score_all          {:>12.0} ns/op\n\
             gather (30%)       {:>12.0} ns/op\n\
             sparse_attention   {:>12.0} ns/op\n",
            self.pages,
            self.dim,
            self.iters,
            self.score_all_ns,
            self.gather_ns,
            self.sparse_attention_ns
        )
    }
}

fn time_ns<F: FnMut()>(iters: usize, mut f: F) -> f64 {
    let start = Instant::now();
    for _ in 0..iters {
        f();
    }
    start.elapsed().as_nanos() as f64 / iters as f64
}

pub fn run(cfg: &RunConfig) -> Result<BenchReport> {
    let cache_cfg = cfg.cache_config()?;
    let mut rng = SplitMix64::new(derive_seed(cfg.seed, "bench"));
    let mut cache = PagedKvCache::new(cache_cfg)?;
    let tokens = cfg.bench_pages * cfg.page_size;
    for _ in 0..tokens {
        let k = rng.normal_vec(cfg.dim);
        let v = rng.normal_vec(cfg.dim);
        cache.append(&k, &v)?;
    }
    let q = rng.normal_vec(cfg.dim);
    let policy = SelectionPolicy::QueryAwareTopK {
        budget: PageBudget::Ratio(0.3),
    };
    let sel = select(&policy, &q, &cache, None)?;
    let iters = cfg.bench_iters.max(1);

    let score_all_ns = time_ns(iters, || {
        std::hint::black_box(score_all(&q, &cache).unwrap());
    });
    let gather_ns = time_ns(iters, || {
        std::hint::black_box(cache.gather(&sel.page_ids).unwrap());
    });
    let sparse_attention_ns = time_ns(iters, || {
        std::hint::black_box(sparse_attention(&q, &cache, &sel).unwrap());
    });

    Ok(BenchReport {
        pages: cache.page_count(),
        tokens,
        dim: cfg.dim,
        iters,
        score_all_ns,
        gather_ns,
        sparse_attention_ns,
    })
}
