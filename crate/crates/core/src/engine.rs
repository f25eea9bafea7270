//! The per-step decode pipeline: append the new token, select pages, gather,
//! attend sparsely, and account for modeled cycles and cross-step page reuse.
//!
//! A [`Session`] owns one cache and replays one decode stream. Sessions are
//! independent; a single session's steps are strictly sequential.

use serde::{Deserialize, Serialize};

use crate::attention::{full_attention, output_error, sparse_attention, AttentionOutput};
use crate::cost_model::{decode_latency, CostParams};
use crate::error::{Error, Result};
use crate::numeric::percentile_nearest_rank;
use crate::paged_kv::{CacheConfig, PagedKvCache};
use crate::selection::{entropy_should_stop, select, SelectionPolicy, SelectionResult};
use crate::workload::Trace;

/// Decode state for one request.
#[derive(Debug, Clone)]
pub struct Session {
    pub session_id: u64,
    cache: PagedKvCache,
    step: usize,
    prev_selection: Option<SelectionResult>,
    stopped: bool,
}

impl Session {
    pub fn new(session_id: u64, config: CacheConfig) -> Result<Self> {
        Ok(Session {
            session_id,
            cache: PagedKvCache::new(config)?,
            step: 0,
            prev_selection: None,
            stopped: false,
        })
    }

    pub fn cache(&self) -> &PagedKvCache {
        &self.cache
    }

    /// Decode steps completed; always equals the cache token count.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    pub fn prev_selection(&self) -> Option<&SelectionResult> {
        self.prev_selection.as_ref()
    }
}

/// Entropy early-exit input for one step: the step's output distribution and
/// the stop threshold.
#[derive(Debug, Clone, Copy)]
pub struct EntropyCheck<'a> {
    pub probs: &'a [f64],
    pub threshold: f64,
}

/// Everything one decode step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub output: AttentionOutput,
    pub selection: SelectionResult,
    /// Modeled cycles for this step from [`decode_latency`].
    pub simulated_cycles: f64,
    /// Fraction of this step's selected pages already selected last step;
    /// 0 on the first step of a session.
    pub hit_rate: f64,
    /// True when the entropy plugin latched the session this step.
    pub stopped_early: bool,
}

/// Run one decode step: append `(k_new, v_new)`, select pages for `q`,
/// attend over the selection, and update reuse accounting.
pub fn decode_step(
    session: &mut Session,
    q: &[f64],
    k_new: &[f64],
    v_new: &[f64],
    policy: &SelectionPolicy,
    cost: &CostParams,
    entropy: Option<EntropyCheck<'_>>,
) -> Result<StepOutcome> {
    if session.stopped {
        return Err(Error::SessionStopped(session.session_id));
    }
    // Validate the query before touching the cache so a shape error leaves
    // the session unchanged.
    let d = session.cache.config().dim;
    if q.len() != d {
        return Err(Error::DimensionMismatch {
            context: "decode query",
            expected: d,
            got: q.len(),
        });
    }
    session.cache.append(k_new, v_new)?;
    session.step += 1;
    debug_assert_eq!(session.step, session.cache.total_len());

    let selection = select(policy, q, &session.cache, session.prev_selection.as_ref())?;
    let output = sparse_attention(q, &session.cache, &selection)?;

    let page_size = session.cache.config().page_size as f64;
    let simulated_cycles = decode_latency(
        cost,
        session.cache.page_count() as f64,
        selection.len() as f64,
        page_size,
    )?;

    let hit_rate = match &session.prev_selection {
        Some(prev) => page_hit_rate(prev, &selection),
        None => 0.0,
    };
    session.prev_selection = Some(selection.clone());

    let stopped_early = match entropy {
        Some(check) => entropy_should_stop(check.probs, check.threshold)?,
        None => false,
    };
    if stopped_early {
        session.stopped = true;
    }

    Ok(StepOutcome {
        output,
        selection,
        simulated_cycles,
        hit_rate,
        stopped_early,
    })
}

/// Fraction of the current selection that was already selected previously:
/// `|prev ∩ cur| / |cur|`, 0 for an empty current selection.
pub fn page_hit_rate(prev: &SelectionResult, cur: &SelectionResult) -> f64 {
    if cur.is_empty() {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut pi = prev.page_ids.iter().peekable();
    for &c in &cur.page_ids {
        while let Some(&&p) = pi.peek() {
            if p < c {
                pi.next();
            } else {
                break;
            }
        }
        if pi.peek() == Some(&&c) {
            hits += 1;
        }
    }
    hits as f64 / cur.len() as f64
}

/// Arithmetic mean of per-step hit rates: the empirical reuse probability to
/// feed back into [`CostParams::rho`].
pub fn estimate_rho(hit_rates: &[f64]) -> Result<f64> {
    if hit_rates.is_empty() {
        return Err(Error::EmptyInput("hit_rates"));
    }
    Ok(hit_rates.iter().sum::<f64>() / hit_rates.len() as f64)
}

/// Per-step record of a session replay. One CSV row per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    pub pages_total: usize,
    pub pages_selected: usize,
    pub hit_rate: f64,
    pub sim_cycles: f64,
    /// Relative L2 error against the full-attention shadow oracle; present
    /// only when the oracle is enabled.
    pub out_err: Option<f64>,
}

/// Replay configuration for [`run_session`].
#[derive(Debug, Clone)]
pub struct SessionParams {
    pub cache: CacheConfig,
    pub policy: SelectionPolicy,
    pub cost: CostParams,
    /// Compute full attention alongside every step to measure output error.
    /// O(L) extra work per step; off unless error curves are wanted.
    pub shadow_oracle: bool,
    /// Entropy early-exit threshold, applied only to trace events that carry
    /// a probability vector.
    pub entropy_threshold: Option<f64>,
}

/// Aggregates and per-step records of one replayed session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: u64,
    pub policy: String,
    pub steps: Vec<StepRecord>,
    pub mean_cycles: f64,
    pub p50_cycles: f64,
    pub p99_cycles: f64,
    /// Mean per-step hit rate over the whole session.
    pub mean_hit_rate: f64,
    /// Empirical reuse probability: mean hit rate including the first step.
    pub rho_hat: f64,
    /// Mean shadow-oracle error, when the oracle was enabled.
    pub mean_out_err: Option<f64>,
    /// Step at which the entropy plugin latched the session, if it fired.
    pub early_stop_step: Option<usize>,
}

impl SessionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-step CSV with a schema line, matching the documented columns.
    pub fn step_csv(&self) -> String {
        let mut out = String::from("# schema=tinykv.steps.v1\n");
        out.push_str("step,policy,pages_total,pages_selected,hit_rate,sim_cycles,out_err\n");
        for r in &self.steps {
            let err = r.out_err.map_or(String::new(), |e| format!("{e}"));
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.step, self.policy, r.pages_total, r.pages_selected, r.hit_rate, r.sim_cycles, err
            ));
        }
        out
    }
}

/// Replay a trace through [`decode_step`], one event per decode step.
///
/// Stops early (without error) if the entropy plugin latches the session;
/// later events are not replayed.
pub fn run_session(
    session_id: u64,
    trace: &Trace,
    params: &SessionParams,
) -> Result<SessionReport> {
    if trace.events.is_empty() {
        return Err(Error::EmptyInput("trace"));
    }
    let mut session = Session::new(session_id, params.cache)?;
    let mut steps: Vec<StepRecord> = Vec::with_capacity(trace.events.len());
    let mut early_stop_step = None;

    for (i, event) in trace.events.iter().enumerate() {
        let step_no = i + 1;
        let entropy = match (&event.probs, params.entropy_threshold) {
            (Some(probs), Some(threshold)) => Some(EntropyCheck { probs, threshold }),
            _ => None,
        };
        let outcome = decode_step(
            &mut session,
            &event.q,
            &event.k,
            &event.v,
            &params.policy,
            &params.cost,
            entropy,
        )
        .map_err(|e| e.at_step(step_no))?;

        let out_err = if params.shadow_oracle {
            let oracle =
                full_attention(&event.q, session.cache()).map_err(|e| e.at_step(step_no))?;
            Some(output_error(&outcome.output.output, &oracle.output)?)
        } else {
            None
        };

        steps.push(StepRecord {
            step: step_no,
            pages_total: session.cache().page_count(),
            pages_selected: outcome.selection.len(),
            hit_rate: outcome.hit_rate,
            sim_cycles: outcome.simulated_cycles,
            out_err,
        });

        if outcome.stopped_early {
            early_stop_step = Some(step_no);
            break;
        }
    }

    let mut cycles: Vec<f64> = steps.iter().map(|r| r.sim_cycles).collect();
    let hit_rates: Vec<f64> = steps.iter().map(|r| r.hit_rate).collect();
    let mean_cycles = cycles.iter().sum::<f64>() / cycles.len() as f64;
    cycles.sort_by(|a, b| a.partial_cmp(b).expect("finite cycles"));
    let rho_hat = estimate_rho(&hit_rates)?;
    let mean_out_err = if params.shadow_oracle {
        let errs: Vec<f64> = steps.iter().filter_map(|r| r.out_err).collect();
        Some(errs.iter().sum::<f64>() / errs.len() as f64)
    } else {
        None
    };

    Ok(SessionReport {
        session_id,
        policy: params.policy.name().to_string(),
        mean_cycles,
        p50_cycles: percentile_nearest_rank(&cycles, 50.0),
        p99_cycles: percentile_nearest_rank(&cycles, 99.0),
        mean_hit_rate: rho_hat,
        rho_hat,
        mean_out_err,
        early_stop_step,
        steps,
    })
}
