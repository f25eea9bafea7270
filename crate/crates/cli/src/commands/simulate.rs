//! The `simulate` command: run the multi-session serving simulator once per
//! configured policy on the identical seed and workload.

use tinykv_core::error::Result;
use tinykv_core::workload::{simulate_serving, ServingReport};

use crate::config::RunConfig;

pub fn run(cfg: &RunConfig) -> Result<Vec<ServingReport>> {
    let workload = cfg.workload()?;
    let cache = cfg.cache_config()?;
    let cost = cfg.cost_params()?;
    let opts = cfg.sim_options();

    let mut reports = Vec::with_capacity(cfg.policies.len());
    for name in &cfg.policies {
        let policy = cfg.policy_by_name(name)?;
        reports.push(simulate_serving(&workload, cache, &policy, &cost, &opts)?);
    }
    Ok(reports)
}

pub fn to_csv(reports: &[ServingReport]) -> String {
    let mut out = String::from(ServingReport::csv_schema());
    for r in reports {
        out.push_str(&r.csv_row());
    }
    out
}

pub fn to_json(reports: &[ServingReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(reports)?)
}

/// Human-readable comparison table.
pub fn render_table(reports: &[ServingReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<20} {:>8} {:>12} {:>12} {:>12} {:>9} {:>9} {:>12}\n",
        "policy", "sessions", "p50_ms", "p99_ms", "req/s", "hit_rate", "rho_hat", "mem_frac"
    ));
    for r in reports {
        let m = &r.metrics;
        out.push_str(&format!(
            "{:<20} {:>8} {:>12.4} {:>12.4} {:>12.4} {:>9.4} {:>9.4} {:>12.6}\n",
            r.policy,
            r.sessions,
            m.p50_ms,
            m.p99_ms,
            m.throughput_req_s,
            m.mean_hit_rate,
            m.rho_hat,
            m.mean_memory_fraction
        ));
    }
    out
}
