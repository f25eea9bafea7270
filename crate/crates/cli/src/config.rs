//! Flat key=value run configuration.
//!
//! One text file, one key per line, `#` comments; command-line `--set`
//! overrides apply after the file, last writer wins. Every key has a
//! documented default (see README) matching the default operating point:
//! page size 16, selection ratio 0.3, entropy threshold 0.5, soft-prune
//! threshold 0.1, 2048-token window.

use std::path::{Path, PathBuf};

use tinykv_core::cost_model::CostParams;
use tinykv_core::error::{Error, Result};
use tinykv_core::numeric::Precision;
use tinykv_core::paged_kv::CacheConfig;
use tinykv_core::selection::{selection_policy_names as policy_names, PageBudget, SelectionPolicy};
use tinykv_core::workload::{SimOptions, TraceKnobs, TraceMode, WorkloadConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub dim: usize,
    pub page_size: usize,
    pub precision_bits: u32,

    pub policy: String,
    pub policies: Vec<String>,
    pub k_ratio: f64,
    /// Absolute page budget; 0 means "use k_ratio".
    pub k_pages: usize,
    pub window_tokens: usize,
    pub sink_pages: usize,
    pub soft_prune_threshold: f64,
    /// 0 disables the entropy plugin (entropy is never negative).
    pub entropy_threshold: f64,

    pub tau_meta: f64,
    pub tau_hb: f64,
    pub tau_attn_coeff: f64,
    pub m_bytes: f64,
    pub rho: f64,

    pub num_sessions: usize,
    pub mean_interarrival_ms: f64,
    pub tokens_min: usize,
    pub tokens_max: usize,
    pub trace_mode: String,
    pub trace_path: Option<PathBuf>,
    pub cluster_count: usize,
    pub query_locality: f64,
    pub cluster_spread: f64,
    pub key_noise: f64,
    pub cluster_block: usize,
    pub drift_scale: f64,
    pub cycles_to_ms: f64,
    pub warmup_steps: usize,
    pub shadow_oracle: bool,

    pub steps: usize,
    pub sweep_page_sizes: Vec<usize>,
    pub sweep_ratios: Vec<f64>,
    pub sweep_warmup: usize,

    /// Cache length L the cost command evaluates the formulas at.
    pub cost_tokens: f64,
    pub sigma2: f64,

    pub bench_pages: usize,
    pub bench_iters: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            dim: 64,
            page_size: 16,
            precision_bits: 64,

            policy: "query_aware_top_k".into(),
            policies: vec!["full_cache".into(), "query_aware_top_k".into()],
            k_ratio: 0.3,
            k_pages: 0,
            window_tokens: 2048,
            sink_pages: 0,
            soft_prune_threshold: 0.1,
            entropy_threshold: 0.5,

            tau_meta: 1.0,
            tau_hb: 4.0,
            tau_attn_coeff: 1.0,
            m_bytes: 512.0,
            rho: 0.2,

            num_sessions: 512,
            mean_interarrival_ms: 50.0,
            tokens_min: 100,
            tokens_max: 500,
            trace_mode: "clustered".into(),
            trace_path: None,
            cluster_count: 4,
            query_locality: 0.95,
            cluster_spread: 4.0,
            key_noise: 0.5,
            cluster_block: 16,
            drift_scale: 0.05,
            cycles_to_ms: 1e-5,
            warmup_steps: 64,
            shadow_oracle: false,

            steps: 1280,
            sweep_page_sizes: vec![4, 8, 16, 32, 64],
            sweep_ratios: vec![0.1, 0.2, 0.3, 0.5],
            sweep_warmup: 768,

            cost_tokens: 32768.0,
            sigma2: 1.0,

            bench_pages: 256,
            bench_iters: 200,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot parse {key}={value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s.trim()))
        .collect()
}

impl RunConfig {
    /// Load a config file into `self`; later lines win over earlier ones.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "{}:{}: expected key=value, got {line:?}",
                    path.display(),
                    idx + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Apply `key=value` overrides in order.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<()> {
        for s in sets {
            let (key, value) = s.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("--set expects key=value, got {s:?}"))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "d" => self.dim = parse(key, value)?,
            "page_size" => self.page_size = parse(key, value)?,
            "precision" => self.precision_bits = parse(key, value)?,

            "policy" => self.policy = value.to_string(),
            "policies" => self.policies = value.split(',').map(|s| s.trim().to_string()).collect(),
            "k_ratio" => self.k_ratio = parse(key, value)?,
            "k_pages" => self.k_pages = parse(key, value)?,
            "window_tokens" => self.window_tokens = parse(key, value)?,
            "sink_pages" => self.sink_pages = parse(key, value)?,
            "soft_prune_threshold" => self.soft_prune_threshold = parse(key, value)?,
            "entropy_threshold" => self.entropy_threshold = parse(key, value)?,

            "tau_meta" => self.tau_meta = parse(key, value)?,
            "tau_hb" => self.tau_hb = parse(key, value)?,
            "tau_attn_coeff" => self.tau_attn_coeff = parse(key, value)?,
            "m_bytes" => self.m_bytes = parse(key, value)?,
            "rho" => self.rho = parse(key, value)?,

            "num_sessions" => self.num_sessions = parse(key, value)?,
            "mean_interarrival_ms" => self.mean_interarrival_ms = parse(key, value)?,
            "tokens_min" => self.tokens_min = parse(key, value)?,
            "tokens_max" => self.tokens_max = parse(key, value)?,
            "trace_mode" => self.trace_mode = value.to_string(),
            "trace_path" => {
                self.trace_path = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "cluster_count" => self.cluster_count = parse(key, value)?,
            "query_locality" => self.query_locality = parse(key, value)?,
            "cluster_spread" => self.cluster_spread = parse(key, value)?,
            "key_noise" => self.key_noise = parse(key, value)?,
            "cluster_block" => self.cluster_block = parse(key, value)?,
            "drift_scale" => self.drift_scale = parse(key, value)?,
            "cycles_to_ms" => self.cycles_to_ms = parse(key, value)?,
            "warmup_steps" => self.warmup_steps = parse(key, value)?,
            "shadow_oracle" => self.shadow_oracle = parse(key, value)?,

            "steps" => self.steps = parse(key, value)?,
            "sweep_page_sizes" => self.sweep_page_sizes = parse_list(key, value)?,
            "sweep_ratios" => self.sweep_ratios = parse_list(key, value)?,
            "sweep_warmup" => self.sweep_warmup = parse(key, value)?,

            "cost_tokens" => self.cost_tokens = parse(key, value)?,
            "sigma2" => self.sigma2 = parse(key, value)?,

            "bench_pages" => self.bench_pages = parse(key, value)?,
            "bench_iters" => self.bench_iters = parse(key, value)?,

            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown config key {other:?}"
                )))
            }
        }
        Ok(())
    }

    pub fn cache_config(&self) -> Result<CacheConfig> {
        let precision = Precision::from_bits(self.precision_bits)?;
        let cfg = CacheConfig::new(self.dim, self.page_size).with_precision(precision);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cost_params(&self) -> Result<CostParams> {
        let p = CostParams {
            tau_meta: self.tau_meta,
            tau_hb: self.tau_hb,
            tau_attn_coeff: self.tau_attn_coeff,
            m_bytes: self.m_bytes,
            rho: self.rho,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn trace_knobs(&self) -> TraceKnobs {
        TraceKnobs {
            cluster_count: self.cluster_count,
            query_locality: self.query_locality,
            cluster_spread: self.cluster_spread,
            key_noise: self.key_noise,
            cluster_block: self.cluster_block,
            drift_scale: self.drift_scale,
        }
    }

    pub fn workload(&self) -> Result<WorkloadConfig> {
        let cfg = WorkloadConfig {
            num_sessions: self.num_sessions,
            mean_interarrival_ms: self.mean_interarrival_ms,
            tokens_per_request: (self.tokens_min, self.tokens_max),
            seed: self.seed,
            trace_mode: TraceMode::parse(&self.trace_mode)?,
            trace_path: self.trace_path.clone(),
            knobs: self.trace_knobs(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            cycles_to_ms: self.cycles_to_ms,
            warmup_steps: self.warmup_steps,
            shadow_oracle: self.shadow_oracle,
            entropy_threshold: if self.entropy_threshold > 0.0 {
                Some(self.entropy_threshold)
            } else {
                None
            },
        }
    }

    /// The `policy` key as a strategy.
    pub fn policy(&self) -> Result<SelectionPolicy> {
        self.policy_by_name(&self.policy)
    }

    pub fn policy_by_name(&self, name: &str) -> Result<SelectionPolicy> {
        if name == policy_names::FULL_CACHE {
            Ok(SelectionPolicy::FullCache)
        } else if name == policy_names::QUERY_AWARE_TOP_K {
            Ok(SelectionPolicy::QueryAwareTopK {
                budget: if self.k_pages > 0 {
                    PageBudget::Pages(self.k_pages)
                } else {
                    PageBudget::Ratio(self.k_ratio)
                },
            })
        } else if name == policy_names::STREAMING_WINDOW {
            Ok(SelectionPolicy::StreamingWindow {
                window_tokens: self.window_tokens,
                sink_pages: self.sink_pages,
            })
        } else if name == policy_names::SOFT_PRUNE {
            Ok(SelectionPolicy::SoftPrune {
                weight_threshold: self.soft_prune_threshold,
            })
        } else {
            Err(Error::InvalidConfig(format!("unknown policy {name:?}")))
        }
    }
}
