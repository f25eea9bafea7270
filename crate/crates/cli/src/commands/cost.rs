//! The `cost` command: evaluate every analytic formula at one operating
//! point and print the results, including both closed forms of the memory
//! fraction at the optimal page size.
//!
//! The two closed forms disagree: substituting S* = sqrt(L/K) into
//! `1/S + rho*K*S/L` gives `(1+rho)*sqrt(K/L)`, while the headline form is
//! `2*rho*sqrt(K/L)`. Both are reported so the discrepancy stays visible;
//! they coincide only at rho = 1.

use serde::Serialize;

use tinykv_core::cost_model::{
    decode_latency, gap_bound, load_bytes, memory_fraction, optimal_page_size, speedup_vs_full,
};
use tinykv_core::error::Result;

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub total_tokens: f64,
    pub page_size: f64,
    pub pages: f64,
    pub selected_pages: f64,
    pub selected_ratio: f64,
    pub rho: f64,
    pub decode_latency_full: f64,
    pub decode_latency_sparse: f64,
    pub speedup_vs_full: f64,
    pub load_bytes: f64,
    pub memory_fraction: f64,
    pub reduction_factor: f64,
    pub s_star_exact: f64,
    pub s_star_pow2: u64,
    pub mem_fraction_at_s_star: f64,
    pub closed_form_one_plus_rho: f64,
    pub closed_form_two_rho: f64,
    pub gap_bound: f64,
}

impl CostReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema=tinykv.cost.v1\nkey,value\n");
        for (k, v) in self.entries() {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(&format!("{k:<28} {v}\n"));
        }
        out
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("total_tokens", format!("{}", self.total_tokens)),
            ("page_size", format!("{}", self.page_size)),
            ("pages", format!("{}", self.pages)),
            ("selected_pages", format!("{}", self.selected_pages)),
            ("selected_ratio", format!("{}", self.selected_ratio)),
            ("rho", format!("{}", self.rho)),
            (
                "decode_latency_full",
                format!("{}", self.decode_latency_full),
            ),
            (
                "decode_latency_sparse",
                format!("{}", self.decode_latency_sparse),
            ),
            ("speedup_vs_full", format!("{}", self.speedup_vs_full)),
            ("load_bytes", format!("{}", self.load_bytes)),
            ("memory_fraction", format!("{}", self.memory_fraction)),
            ("reduction_factor", format!("{}", self.reduction_factor)),
            ("s_star_exact", format!("{}", self.s_star_exact)),
            ("s_star_pow2", format!("{}", self.s_star_pow2)),
            (
                "mem_fraction_at_s_star",
                format!("{}", self.mem_fraction_at_s_star),
            ),
            (
                "closed_form_one_plus_rho",
                format!("{}", self.closed_form_one_plus_rho),
            ),
            (
                "closed_form_two_rho",
                format!("{}", self.closed_form_two_rho),
            ),
            ("gap_bound", format!("{}", self.gap_bound)),
        ]
    }
}

pub fn run(cfg: &RunConfig) -> Result<CostReport> {
    let params = cfg.cost_params()?;
    let l = cfg.cost_tokens;
    let s = cfg.page_size as f64;
    let pages = (l / s).ceil();
    let selected = if cfg.k_pages > 0 {
        cfg.k_pages as f64
    } else {
        cfg.k_ratio * pages
    };

    let full = decode_latency(&params, pages, pages, s)?;
    let sparse = decode_latency(&params, pages, selected, s)?;
    let frac = memory_fraction(s, selected, l, params.rho)?;
    let s_star = optimal_page_size(l, selected)?;
    let k_over_l = (selected / l).sqrt();

    Ok(CostReport {
        total_tokens: l,
        page_size: s,
        pages,
        selected_pages: selected,
        selected_ratio: selected / pages,
        rho: params.rho,
        decode_latency_full: full,
        decode_latency_sparse: sparse,
        speedup_vs_full: speedup_vs_full(&params, l, s, selected)?,
        load_bytes: load_bytes(&params, l, s, selected)?,
        memory_fraction: frac,
        reduction_factor: 1.0 / frac,
        s_star_exact: s_star.exact,
        s_star_pow2: s_star.pow2,
        mem_fraction_at_s_star: memory_fraction(s_star.exact, selected, l, params.rho)?,
        closed_form_one_plus_rho: (1.0 + params.rho) * k_over_l,
        closed_form_two_rho: 2.0 * params.rho * k_over_l,
        gap_bound: gap_bound(cfg.dim, cfg.sigma2, s)?,
    })
}
