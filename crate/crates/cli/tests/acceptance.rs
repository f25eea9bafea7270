//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! One test is known red: `ac04_s_star_minimality_at_sampled_rho` checks
//! the page-size-optimality claim exactly as stated (S* = sqrt(L/K)
//! minimizing `1/S + rho*K*S/L` at the sampled rho), which is false for
//! rho < 1 since the true argmin is sqrt(L/(rho*K)). The test keeps the
//! claim on record and prints the counterexample it finds; see its doc
//! comment for the algebra. Everything else passes.

use std::time::Instant;

use tinykv_cli::commands;
use tinykv_cli::config::RunConfig;
use tinykv_core::attention::{full_attention, output_error, sparse_attention};
use tinykv_core::cost_model::{
    empirical_gap, load_bytes, memory_fraction, page_key_variance, speedup_vs_full, CostParams,
    GapStats,
};
use tinykv_core::paged_kv::{recompute_metadata, CacheConfig, PagedKvCache};
use tinykv_core::selection::{score_page, select, SelectionPolicy};
use tinykv_core::workload::rng::{derive_seed, SplitMix64};

const SEED: u64 = 42;

fn random_cache(rng: &mut SplitMix64, d: usize, s: usize, tokens: usize) -> PagedKvCache {
    let mut cache = PagedKvCache::new(CacheConfig::new(d, s)).unwrap();
    for _ in 0..tokens {
        let k = rng.normal_vec(d);
        let v = rng.normal_vec(d);
        cache.append(&k, &v).unwrap();
    }
    cache
}

fn brute_max_dot(q: &[f64], page: &tinykv_core::paged_kv::KvPage) -> f64 {
    page.keys_iter()
        .map(|k| q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn ac01_upper_bound_zero_violations() {
    let start = Instant::now();
    let mut rng = SplitMix64::new(derive_seed(SEED, "acceptance/upper-bound"));
    let mut cases = 0usize;
    let mut singletons = 0usize;
    for &d in &[4usize, 64] {
        for &s in &[4usize, 16] {
            for _ in 0..2500 {
                cases += 1;
                let tokens = 1 + rng.next_below(s as u64) as usize;
                let cache = random_cache(&mut rng, d, s, tokens);
                let page = cache.page(0).unwrap();
                let q = rng.normal_vec(d);
                let score = score_page(&q, page.meta()).unwrap();
                let best = brute_max_dot(&q, page);
                assert!(
                    score >= best,
                    "violation: score {score} < max dot {best} (d={d}, S={s})"
                );
                if tokens == 1 {
                    singletons += 1;
                    assert_eq!(score, best, "singleton page not exact (d={d}, S={s})");
                }
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(cases >= 10_000);
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "acceptance 01 upper-bound: PASS ({cases} pairs, {singletons} singletons exact, {elapsed:?})"
    );
}

#[test]
fn ac02_oracle_equivalence_at_full_budget() {
    let start = Instant::now();
    let mut rng = SplitMix64::new(derive_seed(SEED, "acceptance/oracle"));
    let cases = 1000;
    let mut worst = 0.0f64;
    for i in 0..cases {
        let d = if i % 2 == 0 { 4 } else { 64 };
        let s = if i % 4 < 2 { 4 } else { 16 };
        let pages = 1 + rng.next_below(64) as usize;
        let tokens = (pages - 1) * s + 1 + rng.next_below(s as u64) as usize;
        let cache = random_cache(&mut rng, d, s, tokens);
        let q = rng.normal_vec(d);
        let full = full_attention(&q, &cache).unwrap();
        let sel = select(&SelectionPolicy::FullCache, &q, &cache, None).unwrap();
        let sparse = sparse_attention(&q, &cache, &sel).unwrap();
        let err = output_error(&sparse.output, &full.output).unwrap();
        worst = worst.max(err);
        assert!(err <= 1e-9, "case {i}: relative L2 error {err} > 1e-9");
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "acceptance 02 oracle-equivalence: PASS ({cases} caches, worst {worst:.2e}, {elapsed:?})"
    );
}

#[test]
fn ac03_metadata_incremental_equals_batch() {
    let mut rng = SplitMix64::new(derive_seed(SEED, "acceptance/metadata"));
    let mut appends = 0usize;
    let mut pages_checked = 0usize;
    while appends < 10_000 {
        let d = 1 + rng.next_below(12) as usize;
        let s = 1 + rng.next_below(16) as usize;
        let tokens = 30 + rng.next_below(90) as usize;
        let cache = random_cache(&mut rng, d, s, tokens);
        appends += tokens;
        for page in cache.pages() {
            pages_checked += 1;
            let batch = recompute_metadata(page.keys_iter()).unwrap();
            assert_eq!(
                page.meta(),
                &batch,
                "page {} incremental metadata differs from batch recompute",
                page.page_id
            );
        }
    }
    println!(
        "acceptance 03 metadata-consistency: PASS ({appends} appends, {pages_checked} pages bit-exact)"
    );
}

#[test]
fn ac04_cost_formula_cross_check() {
    let mut rng = SplitMix64::new(derive_seed(SEED, "acceptance/cost-cross"));
    let cases = 500;
    for _ in 0..cases {
        let s = 1.0 + rng.next_below(256) as f64;
        let pages = 1.0 + rng.next_below(512) as f64;
        let l = s * pages;
        let k = 1.0 + rng.next_below(pages as u64) as f64;
        let rho = rng.next_f64();
        let p = CostParams {
            m_bytes: 1.0 + rng.next_f64() * 4096.0,
            rho,
            ..CostParams::default()
        };
        let load = load_bytes(&p, l, s, k).unwrap();
        let frac = memory_fraction(s, k, l, rho).unwrap();
        let delta = (load / (2.0 * p.m_bytes * l) - frac).abs();
        assert!(delta <= 1e-12, "identity off by {delta}");
    }
    println!("acceptance 04 cost-cross-check: PASS ({cases} random grid points within 1e-12)");
}

/// Criterion 4, second clause, as stated: for random (K, L, rho),
/// memory_fraction at S* = sqrt(L/K) must not exceed its value at any
/// S in {1, 2, 4, ..., 1024}.
///
/// Known red. The claim does not hold for rho < 1:
/// d/dS [1/S + rho*K*S/L] = 0 at S = sqrt(L / (rho*K)), not sqrt(L/K), so
/// every power of two inside (sqrt(L/K), sqrt(L/K)/rho) beats S*.
/// Concretely, K=16, L=4096, rho=0.2: fraction(S*=16) = 0.075 but
/// fraction(32) = 0.05625. The claim is true exactly at rho = 1, which is
/// what `verify`'s cost suite checks; the `cost` command reports both
/// closed forms so the mismatch stays visible.
#[test]
fn ac04_s_star_minimality_at_sampled_rho() {
    let mut rng = SplitMix64::new(derive_seed(SEED, "acceptance/s-star"));
    let mut violations = Vec::new();
    let cases = 100;
    for _ in 0..cases {
        let k = 1.0 + rng.next_below(64) as f64;
        let ratio_exp = rng.next_f64() * 14.0;
        let l = k * 2f64.powf(ratio_exp);
        let rho = 0.05 + 0.95 * rng.next_f64();
        let s_star = (l / k).sqrt();
        let at_star = memory_fraction(s_star, k, l, rho).unwrap();
        for exp in 0..=10u32 {
            let s = (1u64 << exp) as f64;
            let at_s = memory_fraction(s, k, l, rho).unwrap();
            if at_star > at_s {
                violations.push(format!(
                    "K={k}, L={l:.1}, rho={rho:.3}: fraction(S*={s_star:.2}) = {at_star:.5} > fraction({s}) = {at_s:.5}"
                ));
                break; // one violation per triple is enough
            }
        }
    }
    if violations.is_empty() {
        println!("acceptance 04b s-star-minimality: PASS ({cases} triples)");
    } else {
        println!(
            "acceptance 04b s-star-minimality: FAIL ({} of {cases} triples violate; first: {})",
            violations.len(),
            violations[0]
        );
    }
    assert!(
        violations.is_empty(),
        "S* = sqrt(L/K) is not the argmin of 1/S + rho*K*S/L for rho < 1; \
         {} of {cases} sampled triples have a cheaper power-of-two page size. First: {}",
        violations.len(),
        violations[0]
    );
}

#[test]
fn ac05_memory_reduction_claim() {
    // Defaults are the documented operating point: S=16, K*S/L=0.3, rho=0.2.
    let cfg = RunConfig::default();
    let report = commands::cost::run(&cfg).unwrap();
    assert!((report.memory_fraction - 0.1225).abs() < 1e-12);
    let reduction = report.reduction_factor;
    assert!(
        (reduction - 8.0).abs() / 8.0 <= 0.15,
        "reduction {reduction} outside 8x +/- 15%"
    );
    println!(
        "acceptance 05 memory-claim: PASS (fraction {:.4}, reduction {reduction:.2}x within 8x +/- 15%)",
        report.memory_fraction
    );
}

#[test]
fn ac06_speedup_band() {
    let params = CostParams {
        tau_meta: 1.0,
        tau_hb: 4.0,
        tau_attn_coeff: 1.0,
        ..CostParams::default()
    };
    let l = 32768.0;
    let s = 16.0;
    let k = 0.3 * (l / s);
    let speedup = speedup_vs_full(&params, l, s, k).unwrap();
    assert!(
        (2.1..=3.4).contains(&speedup),
        "speedup {speedup} outside [2.1, 3.4]"
    );
    println!("acceptance 06 speedup-band: PASS (model speedup {speedup:.3} in [2.1, 3.4])");
}

#[test]
fn ac07_page_size_trend() {
    let cfg = RunConfig::default();
    assert_eq!(cfg.sweep_page_sizes, vec![4, 8, 16, 32, 64]);
    let report = commands::sweep::run(&cfg).unwrap();
    for &ratio in &cfg.sweep_ratios {
        let rows: Vec<_> = report.rows.iter().filter(|r| r.k_ratio == ratio).collect();
        assert_eq!(rows.len(), cfg.sweep_page_sizes.len());
        for pair in rows.windows(2) {
            assert!(
                pair[1].sim_cycles < pair[0].sim_cycles,
                "ratio {ratio}: cycles not strictly decreasing at S={} -> S={} ({} -> {})",
                pair[0].page_size,
                pair[1].page_size,
                pair[0].sim_cycles,
                pair[1].sim_cycles
            );
            assert!(
                pair[1].mean_out_err >= pair[0].mean_out_err,
                "ratio {ratio}: error decreased at S={} -> S={} ({} -> {})",
                pair[0].page_size,
                pair[1].page_size,
                pair[0].mean_out_err,
                pair[1].mean_out_err
            );
        }
    }
    println!(
        "acceptance 07 page-size-trend: PASS (cycles strictly decrease, error non-decreasing in S at every ratio)"
    );
}

#[test]
fn ac08_ratio_trend() {
    let cfg = RunConfig::default();
    assert_eq!(cfg.sweep_ratios, vec![0.1, 0.2, 0.3, 0.5]);
    let report = commands::sweep::run(&cfg).unwrap();
    let rows: Vec<_> = report.rows.iter().filter(|r| r.page_size == 16).collect();
    assert_eq!(rows.len(), cfg.sweep_ratios.len());
    for pair in rows.windows(2) {
        assert!(
            pair[1].mean_out_err <= pair[0].mean_out_err,
            "error increased from ratio {} to {} ({} -> {})",
            pair[0].k_ratio,
            pair[1].k_ratio,
            pair[0].mean_out_err,
            pair[1].mean_out_err
        );
        assert!(
            pair[1].sim_cycles > pair[0].sim_cycles,
            "cycles not increasing from ratio {} to {}",
            pair[0].k_ratio,
            pair[1].k_ratio
        );
    }
    println!(
        "acceptance 08 ratio-trend: PASS (error non-increasing, cycles increasing in k_ratio at S=16)"
    );
}

#[test]
fn ac09_serving_simulation_sanity() {
    let start = Instant::now();
    let cfg = RunConfig::default();
    assert_eq!(cfg.num_sessions, 512);
    assert_eq!(cfg.mean_interarrival_ms, 50.0);
    assert_eq!(cfg.policies, vec!["full_cache", "query_aware_top_k"]);

    let first = commands::simulate::run(&cfg).unwrap();
    let second = commands::simulate::run(&cfg).unwrap();

    // Determinism: byte-identical machine outputs across runs.
    let csv_a = commands::simulate::to_csv(&first);
    let csv_b = commands::simulate::to_csv(&second);
    assert_eq!(csv_a, csv_b, "CSV outputs differ between identical runs");
    let json_a = commands::simulate::to_json(&first).unwrap();
    let json_b = commands::simulate::to_json(&second).unwrap();
    assert_eq!(json_a, json_b, "JSON outputs differ between identical runs");

    let full = &first[0];
    let sparse = &first[1];
    assert_eq!(full.policy, "full_cache");
    assert_eq!(sparse.policy, "query_aware_top_k");
    assert_eq!(full.sessions, 512);
    assert_eq!(sparse.sessions, 512);
    assert!(
        full.metrics.mean_hit_rate >= 0.99,
        "full-cache post-warmup hit rate {} below 0.99",
        full.metrics.mean_hit_rate
    );
    assert!(
        sparse.metrics.throughput_req_s > full.metrics.throughput_req_s,
        "sparse throughput {} not above full-cache {}",
        sparse.metrics.throughput_req_s,
        full.metrics.throughput_req_s
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!(
        "acceptance 09 serving-sanity: PASS (hit {:.4}, throughput {:.4} > {:.4}, byte-identical, {elapsed:?})",
        full.metrics.mean_hit_rate,
        sparse.metrics.throughput_req_s,
        full.metrics.throughput_req_s
    );
}

#[test]
fn ac10_gap_bound_reporting() {
    let mut rng = SplitMix64::new(derive_seed(SEED, "acceptance/gap"));
    let (d, s) = (16usize, 16usize);
    let noise = 0.5; // per-coordinate sigma of keys around their page center
    let cases = 10_000;
    let mut gaps = Vec::with_capacity(cases);
    let mut sigma_sum = 0.0;
    for _ in 0..cases {
        let tokens = 2 + rng.next_below(s as u64 - 1) as usize;
        let center = rng.normal_vec(d);
        let mut cache = PagedKvCache::new(CacheConfig::new(d, s)).unwrap();
        for _ in 0..tokens {
            let k: Vec<f64> = center
                .iter()
                .map(|c| c + noise * rng.next_normal())
                .collect();
            cache.append(&k, &k).unwrap();
        }
        let page = cache.page(0).unwrap();
        let q = rng.normal_vec(d);
        let gap = empirical_gap(&q, page).unwrap();
        assert!(gap >= 0.0, "negative gap {gap}");
        gaps.push(gap);
        sigma_sum += page_key_variance(page).unwrap();
    }
    let sigma2 = sigma_sum / cases as f64;
    let stats = GapStats::from_gaps(&gaps, sigma2, d, s as f64).unwrap();
    assert!(stats.mean_gap <= stats.max_gap);
    assert!(stats.bound > 0.0);
    // Reported, not asserted: the analytic bound's constant and log base are
    // modeling choices, so the numbers sit side by side here.
    println!(
        "acceptance 10 gap-reporting: PASS ({cases} pages, all gaps >= 0; mean gap {:.4}, max {:.4}, sigma2 {:.4}, bound {:.4})",
        stats.mean_gap, stats.max_gap, stats.sigma2, stats.bound
    );
}
