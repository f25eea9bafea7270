//! Cross-module behavior: trace shape vs. selection quality, engine-level
//! oracle agreement, and simulator ordering guarantees.

use tinykv_core::cost_model::CostParams;
use tinykv_core::engine::{run_session, SessionParams, SessionReport};
use tinykv_core::paged_kv::CacheConfig;
use tinykv_core::selection::{PageBudget, SelectionPolicy};
use tinykv_core::workload::{
    gen_trace, simulate_serving, SimOptions, Trace, TraceKnobs, TraceMode, WorkloadConfig,
};

fn replay(trace: &Trace, page_size: usize, policy: SelectionPolicy, shadow: bool) -> SessionReport {
    let params = SessionParams {
        cache: CacheConfig::new(trace.d, page_size),
        policy,
        cost: CostParams::default(),
        shadow_oracle: shadow,
        entropy_threshold: None,
    };
    run_session(0, trace, &params).unwrap()
}

/// Queries that aim at a hot key cluster make page selection genuinely
/// sparse: the same budget loses far less output accuracy on a clustered
/// trace than on an i.i.d. one.
#[test]
fn clustered_traces_are_easier_than_gaussian_at_the_same_budget() {
    let d = 32;
    let steps = 512;
    let knobs = TraceKnobs {
        query_locality: 0.95,
        cluster_count: 4,
        ..TraceKnobs::default()
    };
    let policy = SelectionPolicy::QueryAwareTopK {
        budget: PageBudget::Ratio(0.3),
    };
    for seed in [42u64, 7, 11] {
        let clustered = gen_trace(TraceMode::Clustered, seed, steps, d, &knobs).unwrap();
        let gaussian = gen_trace(TraceMode::Gaussian, seed, steps, d, &knobs).unwrap();
        let err_c = replay(&clustered, 16, policy.clone(), true)
            .mean_out_err
            .unwrap();
        let err_g = replay(&gaussian, 16, policy.clone(), true)
            .mean_out_err
            .unwrap();
        assert!(
            err_c < err_g,
            "seed {seed}: clustered {err_c} not below gaussian {err_g}"
        );
    }
}

/// Frozen measurement: on the fixed clustered trace (seed 42) a 0.3 page
/// budget reproduces full attention to ~1e-3; the bound here is an order of
/// magnitude above the observed 9.3e-4.
#[test]
fn clustered_sparse_error_stays_below_measured_threshold() {
    let d = 32;
    let knobs = TraceKnobs {
        query_locality: 0.95,
        ..TraceKnobs::default()
    };
    let trace = gen_trace(TraceMode::Clustered, 42, 512, d, &knobs).unwrap();
    let report = replay(
        &trace,
        16,
        SelectionPolicy::QueryAwareTopK {
            budget: PageBudget::Ratio(0.3),
        },
        true,
    );
    assert!(report.mean_out_err.unwrap() < 1e-2);
}

#[test]
fn full_budget_ratio_equals_oracle() {
    let trace = gen_trace(TraceMode::Gaussian, 17, 96, 8, &TraceKnobs::default()).unwrap();
    let report = replay(
        &trace,
        16,
        SelectionPolicy::QueryAwareTopK {
            budget: PageBudget::Ratio(1.0),
        },
        true,
    );
    assert!(report.mean_out_err.unwrap() < 1e-9);
}

#[test]
fn streaming_window_attends_recent_tokens_only() {
    let trace = gen_trace(TraceMode::Drifting, 5, 200, 8, &TraceKnobs::default()).unwrap();
    let report = replay(
        &trace,
        16,
        SelectionPolicy::StreamingWindow {
            window_tokens: 128,
            sink_pages: 1,
        },
        true,
    );
    // Final step: 200 tokens = 13 pages; window covers pages 4..=12, plus
    // one sink page.
    let last = report.steps.last().unwrap();
    assert_eq!(last.pages_total, 13);
    assert_eq!(last.pages_selected, 10);
    // Drifting queries follow recent keys, so the window tracks the oracle
    // far better than its token share would suggest. Measured 0.12 at this
    // seed.
    assert!(report.mean_out_err.unwrap() < 0.3);
}

#[test]
fn soft_prune_tracks_oracle_on_clustered_trace() {
    let trace = gen_trace(TraceMode::Clustered, 23, 256, 16, &TraceKnobs::default()).unwrap();
    let report = replay(
        &trace,
        16,
        SelectionPolicy::SoftPrune {
            weight_threshold: 0.1,
        },
        true,
    );
    assert!(report.steps.iter().all(|s| s.pages_selected >= 1));
    assert!(report.mean_out_err.unwrap() < 0.5);
}

/// The simulator's policy ordering is an end-to-end consequence of the
/// latency model: fewer selected pages, fewer modeled cycles, higher
/// simulated throughput.
#[test]
fn serving_policies_order_as_the_cost_model_predicts() {
    let workload = WorkloadConfig {
        num_sessions: 24,
        mean_interarrival_ms: 50.0,
        tokens_per_request: (60, 160),
        seed: 42,
        trace_mode: TraceMode::Clustered,
        trace_path: None,
        knobs: TraceKnobs::default(),
    };
    let cache = CacheConfig::new(16, 16);
    let cost = CostParams::default();
    let opts = SimOptions {
        warmup_steps: 32,
        ..SimOptions::default()
    };
    let full =
        simulate_serving(&workload, cache, &SelectionPolicy::FullCache, &cost, &opts).unwrap();
    let sparse = simulate_serving(
        &workload,
        cache,
        &SelectionPolicy::QueryAwareTopK {
            budget: PageBudget::Ratio(0.3),
        },
        &cost,
        &opts,
    )
    .unwrap();

    assert!(sparse.metrics.p50_ms < full.metrics.p50_ms);
    assert!(sparse.metrics.throughput_req_s > full.metrics.throughput_req_s);
    // Full cache re-selects everything every step: hit rate ~1 once page
    // counts stabilize.
    assert!(full.metrics.mean_hit_rate > 0.95);
    // Sparse selection moves less memory per step under the model.
    assert!(sparse.metrics.mean_memory_fraction < full.metrics.mean_memory_fraction);
}

#[test]
fn serving_runs_are_bit_identical() {
    let workload = WorkloadConfig {
        num_sessions: 12,
        tokens_per_request: (40, 90),
        ..WorkloadConfig::default()
    };
    let cache = CacheConfig::new(8, 16);
    let policy = SelectionPolicy::QueryAwareTopK {
        budget: PageBudget::Ratio(0.3),
    };
    let cost = CostParams::default();
    let opts = SimOptions::default();
    let a = simulate_serving(&workload, cache, &policy, &cost, &opts).unwrap();
    let b = simulate_serving(&workload, cache, &policy, &cost, &opts).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}
