//! Synthetic decode traces, Poisson arrival workloads, and the multi-session
//! serving simulator.
//!
//! Every output here is a pure function of its configuration and seed. The
//! simulator processes sessions independently (no cross-request batching) in
//! simulated time: a request's latency is the sum of its modeled per-token
//! service times, and throughput is requests over the simulated makespan.

pub mod rng;
pub mod trace_io;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cost_model::CostParams;
use crate::engine::{run_session, SessionParams};
use crate::error::{Error, Result};
use crate::numeric::percentile_nearest_rank;
use crate::paged_kv::CacheConfig;
use crate::selection::SelectionPolicy;

use self::rng::{derive_seed, SplitMix64};

/// One decode step's inputs: a fresh query plus the key/value pair appended
/// at that step, and optionally an output distribution for the entropy
/// plugin.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    pub probs: Option<Vec<f64>>,
}

/// A decode stream: dimension plus ordered events.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub d: usize,
    pub events: Vec<TraceEvent>,
}

/// Shape of generated traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceMode {
    /// i.i.d. standard-normal q, k, v.
    Gaussian,
    /// Keys arrive in blocks drawn around a few cluster centers; queries
    /// mostly target the first cluster. Creates genuine page sparsity.
    Clustered,
    /// A single cluster center random-walks over the stream; queries follow
    /// it, so relevance concentrates on recent pages.
    Drifting,
    /// Replay events from a trace file instead of generating.
    File,
}

impl TraceMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(TraceMode::Gaussian),
            "clustered" => Ok(TraceMode::Clustered),
            "drifting" => Ok(TraceMode::Drifting),
            "file" => Ok(TraceMode::File),
            other => Err(Error::InvalidConfig(format!(
                "unknown trace mode {other:?}"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TraceMode::Gaussian => "gaussian",
            TraceMode::Clustered => "clustered",
            TraceMode::Drifting => "drifting",
            TraceMode::File => "file",
        }
    }
}

/// Knobs for the clustered and drifting generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceKnobs {
    /// Number of key clusters (clustered mode).
    pub cluster_count: usize,
    /// Probability a query targets the hot (first) cluster.
    pub query_locality: f64,
    /// Norm of each cluster center.
    pub cluster_spread: f64,
    /// Per-coordinate noise around centers for keys and queries.
    pub key_noise: f64,
    /// Keys switch cluster every this many consecutive tokens, so pages end
    /// up nearly cluster-pure.
    pub cluster_block: usize,
    /// Per-coordinate center step per token (drifting mode).
    pub drift_scale: f64,
}

impl Default for TraceKnobs {
    fn default() -> Self {
        TraceKnobs {
            cluster_count: 4,
            query_locality: 0.9,
            cluster_spread: 4.0,
            key_noise: 0.5,
            cluster_block: 16,
            drift_scale: 0.05,
        }
    }
}

impl TraceKnobs {
    pub fn validate(&self) -> Result<()> {
        if self.cluster_count == 0 {
            return Err(Error::InvalidConfig("cluster_count must be >= 1".into()));
        }
        if self.cluster_block == 0 {
            return Err(Error::InvalidConfig("cluster_block must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.query_locality) {
            return Err(Error::InvalidConfig(format!(
                "query_locality must be in [0, 1], got {}",
                self.query_locality
            )));
        }
        Ok(())
    }
}

/// A unit vector scaled to `norm`, direction drawn from the RNG.
fn scaled_direction(rng: &mut SplitMix64, d: usize, norm: f64) -> Vec<f64> {
    let mut v = rng.normal_vec(d);
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    for x in v.iter_mut() {
        *x *= norm / len;
    }
    v
}

fn noisy(rng: &mut SplitMix64, center: &[f64], noise: f64) -> Vec<f64> {
    center
        .iter()
        .map(|&c| c + noise * rng.next_normal())
        .collect()
}

/// Generate a deterministic synthetic trace.
pub fn gen_trace(
    mode: TraceMode,
    seed: u64,
    steps: usize,
    d: usize,
    knobs: &TraceKnobs,
) -> Result<Trace> {
    if steps == 0 {
        return Err(Error::InvalidConfig("trace must have >= 1 step".into()));
    }
    if d == 0 {
        return Err(Error::InvalidConfig("trace dimension must be >= 1".into()));
    }
    knobs.validate()?;
    let mut rng = SplitMix64::new(seed);
    let mut events = Vec::with_capacity(steps);

    match mode {
        TraceMode::Gaussian => {
            for _ in 0..steps {
                events.push(TraceEvent {
                    q: rng.normal_vec(d),
                    k: rng.normal_vec(d),
                    v: rng.normal_vec(d),
                    probs: None,
                });
            }
        }
        TraceMode::Clustered => {
            let centers: Vec<Vec<f64>> = (0..knobs.cluster_count)
                .map(|_| scaled_direction(&mut rng, d, knobs.cluster_spread))
                .collect();
            for t in 0..steps {
                let block = (t / knobs.cluster_block) % knobs.cluster_count;
                let target = if rng.next_f64() < knobs.query_locality {
                    0
                } else {
                    rng.next_below(knobs.cluster_count as u64) as usize
                };
                let q = noisy(&mut rng, &centers[target], knobs.key_noise);
                let k = noisy(&mut rng, &centers[block], knobs.key_noise);
                events.push(TraceEvent {
                    q,
                    k,
                    v: rng.normal_vec(d),
                    probs: None,
                });
            }
        }
        TraceMode::Drifting => {
            let mut center = scaled_direction(&mut rng, d, knobs.cluster_spread);
            for _ in 0..steps {
                for c in center.iter_mut() {
                    *c += knobs.drift_scale * rng.next_normal();
                }
                let q = if rng.next_f64() < knobs.query_locality {
                    noisy(&mut rng, &center, knobs.key_noise)
                } else {
                    rng.normal_vec(d)
                };
                let k = noisy(&mut rng, &center, knobs.key_noise);
                events.push(TraceEvent {
                    q,
                    k,
                    v: rng.normal_vec(d),
                    probs: None,
                });
            }
        }
        TraceMode::File => {
            return Err(Error::InvalidConfig(
                "trace mode 'file' replays a file and cannot be generated; set trace_path".into(),
            ));
        }
    }

    Ok(Trace { d, events })
}

/// Cumulative arrival timestamps (ms) of a Poisson process with the given
/// mean inter-arrival time: i.i.d. exponential gaps via inverse CDF.
/// Strictly increasing, deterministic per seed.
pub fn poisson_arrivals(mean_interarrival_ms: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(mean_interarrival_ms.is_finite() && mean_interarrival_ms > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "mean inter-arrival must be positive, got {mean_interarrival_ms}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("need >= 1 arrival".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let mut t = 0.0;
    let mut arrivals = Vec::with_capacity(n);
    for _ in 0..n {
        // u in (0, 1) keeps every gap strictly positive.
        let gap = -mean_interarrival_ms * rng.next_open_f64().ln();
        t += gap;
        arrivals.push(t);
    }
    Ok(arrivals)
}

/// Multi-session workload description.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub num_sessions: usize,
    pub mean_interarrival_ms: f64,
    /// Inclusive range requests draw their decode length from, uniformly.
    pub tokens_per_request: (usize, usize),
    pub seed: u64,
    pub trace_mode: TraceMode,
    /// Source file for `TraceMode::File`.
    pub trace_path: Option<PathBuf>,
    pub knobs: TraceKnobs,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            num_sessions: 512,
            mean_interarrival_ms: 50.0,
            tokens_per_request: (100, 500),
            seed: 42,
            trace_mode: TraceMode::Clustered,
            trace_path: None,
            knobs: TraceKnobs::default(),
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_sessions == 0 {
            return Err(Error::InvalidConfig("num_sessions must be >= 1".into()));
        }
        if !(self.mean_interarrival_ms.is_finite() && self.mean_interarrival_ms > 0.0) {
            return Err(Error::InvalidConfig(
                "mean_interarrival_ms must be positive".into(),
            ));
        }
        let (lo, hi) = self.tokens_per_request;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!(
                "tokens_per_request range must satisfy 1 <= lo <= hi, got {lo}..={hi}"
            )));
        }
        if self.trace_mode == TraceMode::File && self.trace_path.is_none() {
            return Err(Error::InvalidConfig(
                "trace_mode=file requires trace_path".into(),
            ));
        }
        self.knobs.validate()
    }
}

/// Presentation and measurement options for the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Simulated milliseconds per modeled cycle. Purely presentational: it
    /// scales latencies without affecting any ordering or ratio.
    pub cycles_to_ms: f64,
    /// Steps at the start of each session excluded from the steady-state
    /// aggregates (mean hit rate, memory fraction). Cold-start page-count
    /// growth otherwise drags the reuse numbers.
    pub warmup_steps: usize,
    /// Run the full-attention oracle alongside every step (slow).
    pub shadow_oracle: bool,
    /// Entropy early-exit threshold for traces that carry probabilities.
    pub entropy_threshold: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            cycles_to_ms: 1e-5,
            warmup_steps: 64,
            shadow_oracle: false,
            entropy_threshold: None,
        }
    }
}

/// Aggregates over one simulated workload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub throughput_req_s: f64,
    /// Mean per-step page hit rate over post-warmup steps.
    pub mean_hit_rate: f64,
    /// Empirical reuse probability: mean hit rate over all steps.
    pub rho_hat: f64,
    /// Mean modeled memory fraction over post-warmup steps, evaluated at the
    /// measured rho_hat.
    pub mean_memory_fraction: f64,
}

/// Simulator output: metrics plus the identifiers CSV rows carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServingReport {
    pub policy: String,
    pub sessions: usize,
    pub metrics: AggregateMetrics,
}

impl ServingReport {
    pub fn csv_schema() -> &'static str {
        "# schema=tinykv.serving.v1\npolicy,sessions,p50_ms,p99_ms,throughput,hit_rate,rho_hat,mem_fraction\n"
    }

    pub fn csv_row(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{},{},{},{},{}\n",
            self.policy,
            self.sessions,
            m.p50_ms,
            m.p99_ms,
            m.throughput_req_s,
            m.mean_hit_rate,
            m.rho_hat,
            m.mean_memory_fraction
        )
    }
}

/// Simulate `num_sessions` independent decode sessions arriving as a Poisson
/// process and decoding to completion under `policy`.
///
/// Deterministic per seed: arrivals, request lengths and traces all derive
/// from `workload.seed` via named sub-seeds, and aggregation runs in session
/// id order.
pub fn simulate_serving(
    workload: &WorkloadConfig,
    cache: CacheConfig,
    policy: &SelectionPolicy,
    cost: &CostParams,
    opts: &SimOptions,
) -> Result<ServingReport> {
    workload.validate()?;
    cache.validate()?;
    cost.validate()?;
    if !(opts.cycles_to_ms.is_finite() && opts.cycles_to_ms > 0.0) {
        return Err(Error::InvalidConfig("cycles_to_ms must be positive".into()));
    }

    let arrivals = poisson_arrivals(
        workload.mean_interarrival_ms,
        workload.num_sessions,
        derive_seed(workload.seed, "arrivals"),
    )?;
    let mut len_rng = SplitMix64::new(derive_seed(workload.seed, "lengths"));
    let (lo, hi) = workload.tokens_per_request;

    let file_trace = match workload.trace_mode {
        TraceMode::File => {
            let path = workload.trace_path.as_ref().expect("validated");
            let trace = trace_io::read_trace(path)?;
            if trace.d != cache.dim {
                return Err(Error::DimensionMismatch {
                    context: "trace file",
                    expected: cache.dim,
                    got: trace.d,
                });
            }
            Some(trace)
        }
        _ => None,
    };

    let session_params = SessionParams {
        cache,
        policy: policy.clone(),
        cost: *cost,
        shadow_oracle: opts.shadow_oracle,
        entropy_threshold: opts.entropy_threshold,
    };
    let page_size = cache.page_size as f64;

    let mut latencies = Vec::with_capacity(workload.num_sessions);
    let mut makespan: f64 = 0.0;
    let mut hit_sum_all = 0.0;
    let mut steps_all = 0usize;
    let mut ks_over_l_all = 0.0;
    let mut hit_sum_warm = 0.0;
    let mut steps_warm = 0usize;
    let mut ks_over_l_warm = 0.0;

    for (sid, arrival) in arrivals.iter().enumerate() {
        let tokens = lo + len_rng.next_below((hi - lo + 1) as u64) as usize;
        let trace = match &file_trace {
            Some(full) => {
                let take = tokens.min(full.events.len());
                Trace {
                    d: full.d,
                    events: full.events[..take].to_vec(),
                }
            }
            None => gen_trace(
                workload.trace_mode,
                derive_seed(workload.seed, &format!("trace/{sid}")),
                tokens,
                cache.dim,
                &workload.knobs,
            )?,
        };

        let report = run_session(sid as u64, &trace, &session_params)?;

        let service_ms: f64 = report
            .steps
            .iter()
            .map(|s| s.sim_cycles * opts.cycles_to_ms)
            .sum();
        latencies.push(service_ms);
        makespan = makespan.max(arrival + service_ms);

        for step in &report.steps {
            let ks_over_l = step.pages_selected as f64 * page_size / step.step as f64;
            hit_sum_all += step.hit_rate;
            steps_all += 1;
            ks_over_l_all += ks_over_l;
            if step.step > opts.warmup_steps {
                hit_sum_warm += step.hit_rate;
                steps_warm += 1;
                ks_over_l_warm += ks_over_l;
            }
        }
    }

    debug_assert_eq!(latencies.len(), workload.num_sessions);
    let sessions = latencies.len();
    let mut sorted = latencies;
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite latencies"));

    let rho_hat = hit_sum_all / steps_all as f64;
    // Workloads shorter than the warmup window fall back to the full stream.
    let (hit_sum, ks_sum, steps_meas) = if steps_warm > 0 {
        (hit_sum_warm, ks_over_l_warm, steps_warm)
    } else {
        (hit_sum_all, ks_over_l_all, steps_all)
    };
    let mean_hit_rate = hit_sum / steps_meas as f64;
    let mean_memory_fraction = 1.0 / page_size + rho_hat * ks_sum / steps_meas as f64;

    Ok(ServingReport {
        policy: policy.name().to_string(),
        sessions,
        metrics: AggregateMetrics {
            p50_ms: percentile_nearest_rank(&sorted, 50.0),
            p99_ms: percentile_nearest_rank(&sorted, 99.0),
            throughput_req_s: sessions as f64 / (makespan / 1000.0),
            mean_hit_rate,
            rho_hat,
            mean_memory_fraction,
        },
    })
}
