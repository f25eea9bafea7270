//! The `sweep` command: page-size x selection-ratio grid over one fixed
//! seeded trace, with the full-attention shadow oracle on.
//!
//! Each ratio is translated to a fixed token budget `r * steps`, and each
//! grid point selects `budget / S` pages per step (capped by the pages that
//! exist). Holding the token budget fixed across page sizes is what makes
//! the page-size axis comparable: the fetched-token term of the latency
//! model stays put while the metadata-scan term shrinks with S. Aggregates
//! are taken over the post-warmup steps, where every grid point is sparse.

use serde::Serialize;

use tinykv_core::engine::{run_session, SessionParams};
use tinykv_core::error::{Error, Result};
use tinykv_core::numeric::Precision;
use tinykv_core::paged_kv::CacheConfig;
use tinykv_core::selection::{PageBudget, SelectionPolicy};
use tinykv_core::workload::rng::derive_seed;
use tinykv_core::workload::{gen_trace, TraceMode};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub page_size: usize,
    pub k_ratio: f64,
    pub mean_out_err: f64,
    pub sim_cycles: f64,
    pub hit_rate: f64,
    pub mem_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub seed: u64,
    pub steps: usize,
    pub warmup: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema=tinykv.sweep.v1\n");
        out.push_str("S,k_ratio,mean_out_err,sim_cycles,hit_rate,mem_fraction\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.page_size, r.k_ratio, r.mean_out_err, r.sim_cycles, r.hit_rate, r.mem_fraction
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn run(cfg: &RunConfig) -> Result<SweepReport> {
    if cfg.sweep_page_sizes.is_empty() || cfg.sweep_ratios.is_empty() {
        return Err(Error::InvalidConfig("sweep grid is empty".into()));
    }
    if cfg.sweep_warmup >= cfg.steps {
        return Err(Error::InvalidConfig(format!(
            "sweep_warmup ({}) must be below steps ({})",
            cfg.sweep_warmup, cfg.steps
        )));
    }
    let mode = TraceMode::parse(&cfg.trace_mode)?;
    let trace = gen_trace(
        mode,
        derive_seed(cfg.seed, "sweep/trace"),
        cfg.steps,
        cfg.dim,
        &cfg.trace_knobs(),
    )?;
    let cost = cfg.cost_params()?;
    let precision = Precision::from_bits(cfg.precision_bits)?;

    let mut rows = Vec::new();
    for &page_size in &cfg.sweep_page_sizes {
        for &ratio in &cfg.sweep_ratios {
            let budget_tokens = ratio * cfg.steps as f64;
            let k = (budget_tokens / page_size as f64).round().max(1.0) as usize;
            let params = SessionParams {
                cache: CacheConfig::new(cfg.dim, page_size).with_precision(precision),
                policy: SelectionPolicy::QueryAwareTopK {
                    budget: PageBudget::Pages(k),
                },
                cost,
                shadow_oracle: true,
                entropy_threshold: None,
            };
            let report = run_session(0, &trace, &params)?;

            let window: Vec<_> = report
                .steps
                .iter()
                .filter(|s| s.step > cfg.sweep_warmup)
                .collect();
            let n = window.len() as f64;
            let mean_out_err = window
                .iter()
                .map(|s| s.out_err.expect("oracle enabled"))
                .sum::<f64>()
                / n;
            let sim_cycles = window.iter().map(|s| s.sim_cycles).sum::<f64>() / n;
            let hit_rate = window.iter().map(|s| s.hit_rate).sum::<f64>() / n;
            let ks_over_l = window
                .iter()
                .map(|s| s.pages_selected as f64 * page_size as f64 / s.step as f64)
                .sum::<f64>()
                / n;
            let mem_fraction = 1.0 / page_size as f64 + report.rho_hat * ks_over_l;

            rows.push(SweepRow {
                page_size,
                k_ratio: ratio,
                mean_out_err,
                sim_cycles,
                hit_rate,
                mem_fraction,
            });
        }
    }

    Ok(SweepReport {
        seed: cfg.seed,
        steps: cfg.steps,
        warmup: cfg.sweep_warmup,
        rows,
    })
}
