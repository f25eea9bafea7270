//! The `verify` command: seeded randomized suites for the structural
//! invariants the rest of the artifact leans on. Exit 0 only if every suite
//! passes.

use serde::Serialize;

use tinykv_core::attention::{full_attention, output_error, sparse_attention};
use tinykv_core::cost_model::{
    decode_latency, empirical_gap, load_bytes, memory_fraction, page_key_variance, speedup_vs_full,
    CostParams, GapStats,
};
use tinykv_core::error::Result;
use tinykv_core::paged_kv::{recompute_metadata, CacheConfig, PagedKvCache};
use tinykv_core::selection::{score_page, select, SelectionPolicy};
use tinykv_core::workload::rng::{derive_seed, SplitMix64};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
    pub all_passed: bool,
}

impl VerifyReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn random_cache(rng: &mut SplitMix64, d: usize, s: usize, tokens: usize) -> PagedKvCache {
    let mut cache = PagedKvCache::new(CacheConfig::new(d, s)).expect("valid test config");
    for _ in 0..tokens {
        let k = rng.normal_vec(d);
        let v = rng.normal_vec(d);
        cache.append(&k, &v).expect("finite vectors");
    }
    cache
}

fn brute_max_dot(q: &[f64], page: &tinykv_core::paged_kv::KvPage) -> f64 {
    page.keys_iter()
        .map(|k| q.iter().zip(k).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn metadata_consistency(seed: u64) -> SuiteResult {
    let mut rng = SplitMix64::new(seed);
    let mut appends = 0usize;
    for _ in 0..240 {
        let d = 1 + rng.next_below(8) as usize;
        let s = 1 + rng.next_below(8) as usize;
        let tokens = 20 + rng.next_below(60) as usize;
        appends += tokens;
        let cache = random_cache(&mut rng, d, s, tokens);
        for page in cache.pages() {
            let batch = recompute_metadata(page.keys_iter()).expect("non-empty page");
            if page.meta() != &batch {
                return SuiteResult {
                    name: "metadata consistency".into(),
                    cases: appends,
                    passed: false,
                    detail: format!("page {} incremental != batch", page.page_id),
                };
            }
        }
    }
    SuiteResult {
        name: "metadata consistency".into(),
        cases: appends,
        passed: true,
        detail: format!("{appends} appends, incremental == batch bit-exact"),
    }
}

fn box_containment(seed: u64, corrupt: bool) -> SuiteResult {
    let mut rng = SplitMix64::new(seed);
    let mut checked = 0usize;
    for case in 0..60 {
        let d = 1 + rng.next_below(8) as usize;
        let s = 1 + rng.next_below(8) as usize;
        let tokens = 10 + rng.next_below(50) as usize;
        let mut cache = random_cache(&mut rng, d, s, tokens);
        if corrupt && case == 0 {
            cache
                .corrupt_page_metadata(0, 0, 1.0)
                .expect("page 0 exists");
        }
        for page in cache.pages() {
            for (i, key) in page.keys_iter().enumerate() {
                checked += 1;
                for (dim, &x) in key.iter().enumerate() {
                    let (lo, hi) = (page.meta().min[dim], page.meta().max[dim]);
                    if !(lo <= x && x <= hi) {
                        return SuiteResult {
                            name: "box containment".into(),
                            cases: checked,
                            passed: false,
                            detail: format!(
                                "page {} token {i} dim {dim}: {x} outside [{lo}, {hi}]",
                                page.page_id
                            ),
                        };
                    }
                }
            }
        }
    }
    SuiteResult {
        name: "box containment".into(),
        cases: checked,
        passed: true,
        detail: format!("{checked} keys inside their page boxes"),
    }
}

fn upper_bound(seed: u64) -> SuiteResult {
    let mut rng = SplitMix64::new(seed);
    let mut cases = 0usize;
    for &d in &[4usize, 64] {
        for &s in &[4usize, 16] {
            for _ in 0..2500 {
                cases += 1;
                let tokens = 1 + rng.next_below(s as u64) as usize;
                let cache = random_cache(&mut rng, d, s, tokens);
                let page = cache.page(0).expect("one page");
                let q = rng.normal_vec(d);
                let score = score_page(&q, page.meta()).expect("valid query");
                let best = brute_max_dot(&q, page);
                if score < best {
                    return SuiteResult {
                        name: "upper bound".into(),
                        cases,
                        passed: false,
                        detail: format!("score {score} < best dot {best} (d={d}, S={s})"),
                    };
                }
                if tokens == 1 && score != best {
                    return SuiteResult {
                        name: "upper bound".into(),
                        cases,
                        passed: false,
                        detail: format!("singleton not exact: {score} vs {best}"),
                    };
                }
            }
        }
    }
    SuiteResult {
        name: "upper bound".into(),
        cases,
        passed: true,
        detail: format!("{cases} (q, page) pairs, zero violations, singletons exact"),
    }
}

fn oracle_equivalence(seed: u64) -> SuiteResult {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0f64;
    let cases = 1000;
    for i in 0..cases {
        let d = if i % 2 == 0 { 4 } else { 64 };
        let s = if i % 4 < 2 { 4 } else { 16 };
        let pages = 1 + rng.next_below(64) as usize;
        let tokens = (pages - 1) * s + 1 + rng.next_below(s as u64) as usize;
        let cache = random_cache(&mut rng, d, s, tokens);
        let q = rng.normal_vec(d);
        let full = full_attention(&q, &cache).expect("non-empty");
        let sel = select(&SelectionPolicy::FullCache, &q, &cache, None).expect("non-empty");
        let sparse = sparse_attention(&q, &cache, &sel).expect("valid selection");
        let err = output_error(&sparse.output, &full.output).expect("same dim");
        worst = worst.max(err);
        if err > 1e-9 {
            return SuiteResult {
                name: "oracle equivalence".into(),
                cases: i + 1,
                passed: false,
                detail: format!("K=P relative error {err} > 1e-9"),
            };
        }
    }
    SuiteResult {
        name: "oracle equivalence".into(),
        cases,
        passed: true,
        detail: format!("sparse(K=P) == full within 1e-9, worst {worst:.3e}"),
    }
}

fn cost_cross_check(seed: u64) -> SuiteResult {
    let mut rng = SplitMix64::new(seed);
    let mut cases = 0usize;

    // load_bytes / (2 M L) must equal memory_fraction exactly (1e-12).
    for _ in 0..500 {
        cases += 1;
        let s = 1.0 + rng.next_below(128) as f64;
        let pages = 1.0 + rng.next_below(256) as f64;
        let l = s * pages;
        let k = 1.0 + rng.next_below(pages as u64) as f64;
        let rho = rng.next_f64();
        let p = CostParams {
            m_bytes: 1.0 + rng.next_f64() * 2000.0,
            rho,
            ..CostParams::default()
        };
        let load = load_bytes(&p, l, s, k).expect("valid");
        let frac = memory_fraction(s, k, l, rho).expect("valid");
        let delta = (load / (2.0 * p.m_bytes * l) - frac).abs();
        if delta > 1e-12 {
            return SuiteResult {
                name: "cost cross-check".into(),
                cases,
                passed: false,
                detail: format!("load/(2ML) deviates from fraction by {delta}"),
            };
        }
    }

    // At rho = 1 (the regime the closed form minimizes), S* = sqrt(L/K)
    // beats every power-of-two page size.
    for _ in 0..100 {
        cases += 1;
        let k = 1.0 + rng.next_below(64) as f64;
        let l = k * (1.0 + rng.next_below(4096) as f64);
        let s_star = (l / k).sqrt();
        let at_star = memory_fraction(s_star, k, l, 1.0).expect("valid");
        for exp in 0..=10 {
            let s = (1u64 << exp) as f64;
            let at_s = memory_fraction(s, k, l, 1.0).expect("valid");
            if at_star > at_s + 1e-12 {
                return SuiteResult {
                    name: "cost cross-check".into(),
                    cases,
                    passed: false,
                    detail: format!("S*={s_star} worse than S={s} at K={k}, L={l}"),
                };
            }
        }
    }

    // Full selection gives speedup exactly 1.
    for _ in 0..50 {
        cases += 1;
        let s = 1.0 + rng.next_below(64) as f64;
        let pages = 1.0 + rng.next_below(512) as f64;
        let p = CostParams::default();
        let ratio = speedup_vs_full(&p, pages * s, s, pages).expect("valid");
        if ratio != 1.0 {
            return SuiteResult {
                name: "cost cross-check".into(),
                cases,
                passed: false,
                detail: format!("speedup at K=P is {ratio}, not 1"),
            };
        }
        let _ = decode_latency(&p, pages, pages, s).expect("valid");
    }

    SuiteResult {
        name: "cost cross-check".into(),
        cases,
        passed: true,
        detail: "fraction identity 1e-12, S* optimal at rho=1, K=P speedup 1".into(),
    }
}

fn gap_nonnegativity(seed: u64) -> SuiteResult {
    let mut rng = SplitMix64::new(seed);
    let (d, s) = (16usize, 16usize);
    let cases = 10_000;
    let mut gaps = Vec::with_capacity(cases);
    let mut sigma_sum = 0.0;
    for i in 0..cases {
        let tokens = if i % 10 == 0 {
            1 // exercise the singleton-exactness edge
        } else {
            2 + rng.next_below(s as u64 - 1) as usize
        };
        let cache = random_cache(&mut rng, d, s, tokens);
        let page = cache.page(0).expect("one page");
        let q = rng.normal_vec(d);
        let gap = empirical_gap(&q, page).expect("non-empty");
        if gap < 0.0 {
            return SuiteResult {
                name: "gap nonnegativity".into(),
                cases: i + 1,
                passed: false,
                detail: format!("negative gap {gap}"),
            };
        }
        if tokens == 1 && gap != 0.0 {
            return SuiteResult {
                name: "gap nonnegativity".into(),
                cases: i + 1,
                passed: false,
                detail: format!("singleton gap {gap} != 0"),
            };
        }
        sigma_sum += page_key_variance(page).expect("non-empty");
        gaps.push(gap);
    }
    let sigma2 = sigma_sum / cases as f64;
    let stats = GapStats::from_gaps(&gaps, sigma2, d, s as f64).expect("non-empty");
    SuiteResult {
        name: "gap nonnegativity".into(),
        cases,
        passed: true,
        detail: format!(
            "all gaps >= 0; mean {:.4}, max {:.4}, sigma2 {:.4}, bound {:.4}",
            stats.mean_gap, stats.max_gap, stats.sigma2, stats.bound
        ),
    }
}

pub fn run(cfg: &RunConfig, corrupt_metadata: bool) -> Result<VerifyReport> {
    let seed = cfg.seed;
    let suites = vec![
        metadata_consistency(derive_seed(seed, "verify/metadata")),
        box_containment(derive_seed(seed, "verify/containment"), corrupt_metadata),
        upper_bound(derive_seed(seed, "verify/upper-bound")),
        oracle_equivalence(derive_seed(seed, "verify/oracle")),
        cost_cross_check(derive_seed(seed, "verify/cost")),
        gap_nonnegativity(derive_seed(seed, "verify/gap")),
    ];
    let all_passed = suites.iter().all(|s| s.passed);
    Ok(VerifyReport {
        seed,
        suites,
        all_passed,
    })
}
