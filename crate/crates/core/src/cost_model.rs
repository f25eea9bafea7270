//! Analytic models for the paged decode pipeline: per-step latency, memory
//! movement, normalized memory fraction, optimal page size, speedup, and the
//! approximation-gap bound, plus empirical gap measurement against the
//! bounding-box score.
//!
//! Everything here is a pure function of plain scalars. Page and token counts
//! are taken as `f64` so that operating points like "30% of 2048 pages" can
//! be evaluated without rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Precision;
use crate::paged_kv::KvPage;
use crate::selection::score_page;

/// Coefficients of the latency and memory models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Cycles to scan one page's metadata.
    pub tau_meta: f64,
    /// Cycles per token fetched from high-bandwidth memory.
    pub tau_hb: f64,
    /// Cycles per attended token (the attention term is linear).
    pub tau_attn_coeff: f64,
    /// Bytes per cached token (one key or one value vector).
    pub m_bytes: f64,
    /// Reuse probability of selected pages across adjacent steps.
    pub rho: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        // Default operating point: metadata scans are cheap relative to HBM
        // fetches, one cycle per attended token, 64-dim f64 tokens.
        CostParams {
            tau_meta: 1.0,
            tau_hb: 4.0,
            tau_attn_coeff: 1.0,
            m_bytes: 512.0,
            rho: 0.2,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau_meta", self.tau_meta),
            ("tau_hb", self.tau_hb),
            ("tau_attn_coeff", self.tau_attn_coeff),
            ("m_bytes", self.m_bytes),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!(
                "rho must be in [0, 1], got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Modeled cycles for one decode step: scan all `pages` metadata entries,
/// fetch `selected` pages of `page_size` tokens, attend over them.
pub fn decode_latency(p: &CostParams, pages: f64, selected: f64, page_size: f64) -> Result<f64> {
    if selected > pages {
        return Err(Error::Budget(format!(
            "selected pages ({selected}) exceed total pages ({pages})"
        )));
    }
    let fetched = selected * page_size;
    Ok(p.tau_meta * pages + p.tau_hb * fetched + p.tau_attn_coeff * fetched)
}

/// Modeled bytes moved per decode step: metadata for every page plus the
/// reuse-weighted selected tokens, keys and values both.
pub fn load_bytes(p: &CostParams, total_tokens: f64, page_size: f64, selected: f64) -> Result<f64> {
    if total_tokens < 1.0 || page_size < 1.0 {
        return Err(Error::Domain(format!(
            "load_bytes requires L >= 1 and S >= 1, got L={total_tokens}, S={page_size}"
        )));
    }
    Ok(2.0 * p.m_bytes * (total_tokens / page_size + p.rho * selected * page_size))
}

/// Per-step memory movement relative to full-cache attention:
/// `1/S + rho * K * S / L`.
pub fn memory_fraction(page_size: f64, selected: f64, total_tokens: f64, rho: f64) -> Result<f64> {
    if page_size <= 0.0 || selected <= 0.0 || total_tokens <= 0.0 {
        return Err(Error::Domain(
            "memory_fraction requires positive S, K and L".into(),
        ));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho must be in [0, 1], got {rho}")));
    }
    Ok(1.0 / page_size + rho * selected * page_size / total_tokens)
}

/// Page size minimizing raw movement `L/S + K*S`, as a real number plus the
/// geometrically nearest power-of-two candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalPageSize {
    pub exact: f64,
    pub pow2: u64,
}

pub fn optimal_page_size(total_tokens: f64, selected: f64) -> Result<OptimalPageSize> {
    if selected < 1.0 || total_tokens < selected {
        return Err(Error::Budget(format!(
            "optimal_page_size requires L >= K >= 1, got L={total_tokens}, K={selected}"
        )));
    }
    let exact = (total_tokens / selected).sqrt();
    let pow2 = 2f64.powf(exact.log2().round()) as u64;
    Ok(OptimalPageSize { exact, pow2 })
}

/// Expected-gap bound `(d * sigma2 / S) * sqrt(ln S)`.
///
/// Natural log; the base is a modeling choice exposed here as a single
/// formula rather than a config knob.
pub fn gap_bound(dim: usize, sigma2: f64, page_size: f64) -> Result<f64> {
    if page_size < 2.0 {
        return Err(Error::Domain(format!(
            "gap bound requires S >= 2, got {page_size}"
        )));
    }
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::Domain(format!(
            "sigma2 must be finite and non-negative, got {sigma2}"
        )));
    }
    Ok(dim as f64 * sigma2 / page_size * page_size.ln().sqrt())
}

/// Measured slack of the bounding-box score over the true best dot product
/// in a page. Non-negative by the upper-bound property; zero for singleton
/// pages.
pub fn empirical_gap(q: &[f64], page: &KvPage) -> Result<f64> {
    if page.is_empty() {
        return Err(Error::EmptyPage);
    }
    let score = score_page(q, page.meta())?;
    let max_dot = page
        .keys_iter()
        .map(|k| Precision::F64.dot(q, k))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(score - max_dot)
}

/// Mean per-dimension variance of a page's keys (population variance,
/// averaged over dimensions). This is the sigma^2 the gap bound refers to.
pub fn page_key_variance(page: &KvPage) -> Result<f64> {
    if page.is_empty() {
        return Err(Error::EmptyPage);
    }
    let n = page.len() as f64;
    let d = page.meta().dim();
    let mut mean = vec![0.0f64; d];
    for key in page.keys_iter() {
        for (m, k) in mean.iter_mut().zip(key) {
            *m += k;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var_sum = 0.0f64;
    for key in page.keys_iter() {
        for (m, k) in mean.iter().zip(key) {
            let dev = k - m;
            var_sum += dev * dev;
        }
    }
    Ok(var_sum / (n * d as f64))
}

/// Summary of an empirical gap sweep next to the analytic bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub mean_gap: f64,
    pub max_gap: f64,
    /// Mean within-page key variance over the sampled pages.
    pub sigma2: f64,
    /// Analytic bound evaluated at (d, sigma2, S).
    pub bound: f64,
}

impl GapStats {
    pub fn from_gaps(gaps: &[f64], sigma2: f64, dim: usize, page_size: f64) -> Result<GapStats> {
        if gaps.is_empty() {
            return Err(Error::EmptyInput("gaps"));
        }
        let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let max_gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(GapStats {
            mean_gap,
            max_gap,
            sigma2,
            bound: gap_bound(dim, sigma2, page_size)?,
        })
    }
}

/// Ratio of full-cache decode latency to sparse decode latency at the same
/// cache size: `latency(K=P) / latency(K)`.
pub fn speedup_vs_full(
    p: &CostParams,
    total_tokens: f64,
    page_size: f64,
    selected: f64,
) -> Result<f64> {
    if page_size < 1.0 || total_tokens < 1.0 {
        return Err(Error::Domain("speedup requires L >= 1 and S >= 1".into()));
    }
    let pages = (total_tokens / page_size).ceil();
    let full = decode_latency(p, pages, pages, page_size)?;
    let sparse = decode_latency(p, pages, selected, page_size)?;
    Ok(full / sparse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paged_kv::{CacheConfig, PagedKvCache};
    use crate::workload::rng::SplitMix64;

    fn params(tau_meta: f64, tau_hb: f64, coeff: f64) -> CostParams {
        CostParams {
            tau_meta,
            tau_hb,
            tau_attn_coeff: coeff,
            ..CostParams::default()
        }
    }

    #[test]
    fn decode_latency_formula() {
        let p = params(1.0, 2.0, 1.0);
        let cycles = decode_latency(&p, 4.0, 2.0, 16.0).unwrap();
        assert_eq!(cycles, 4.0 + 64.0 + 32.0);
    }

    #[test]
    fn decode_latency_zero_selection_is_metadata_only() {
        let p = params(3.0, 2.0, 1.0);
        assert_eq!(decode_latency(&p, 7.0, 0.0, 16.0).unwrap(), 21.0);
    }

    #[test]
    fn decode_latency_rejects_overbudget() {
        let p = CostParams::default();
        assert!(matches!(
            decode_latency(&p, 4.0, 5.0, 16.0),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn load_bytes_formula() {
        let p = CostParams {
            m_bytes: 1.0,
            rho: 1.0,
            ..CostParams::default()
        };
        assert_eq!(load_bytes(&p, 32.0, 16.0, 1.0).unwrap(), 36.0);
    }

    #[test]
    fn load_bytes_zero_reuse_is_metadata_only() {
        let p = CostParams {
            m_bytes: 3.0,
            rho: 0.0,
            ..CostParams::default()
        };
        assert_eq!(load_bytes(&p, 64.0, 16.0, 2.0).unwrap(), 2.0 * 3.0 * 4.0);
    }

    #[test]
    fn load_bytes_is_consistent_with_memory_fraction() {
        let mut rng = SplitMix64::new(99);
        for _ in 0..200 {
            let page_size = 1.0 + (rng.next_u64() % 64) as f64;
            let pages = 1.0 + (rng.next_u64() % 128) as f64;
            let total = page_size * pages;
            let selected = 1.0 + (rng.next_u64() % pages as u64) as f64;
            let rho = rng.next_f64();
            let p = CostParams {
                m_bytes: 1.0 + rng.next_f64() * 1000.0,
                rho,
                ..CostParams::default()
            };
            let load = load_bytes(&p, total, page_size, selected).unwrap();
            let frac = memory_fraction(page_size, selected, total, rho).unwrap();
            assert!((load / (2.0 * p.m_bytes * total) - frac).abs() < 1e-12);
        }
    }

    #[test]
    fn memory_fraction_boundary_cases() {
        // S=1, K=L, rho=1: metadata doubles the cost.
        assert_eq!(memory_fraction(1.0, 8.0, 8.0, 1.0).unwrap(), 2.0);
        // rho=0: metadata-only fraction.
        assert_eq!(memory_fraction(16.0, 4.0, 64.0, 0.0).unwrap(), 1.0 / 16.0);
    }

    #[test]
    fn memory_fraction_default_operating_point() {
        // S=16, K*S/L = 0.3, rho=0.2 -> 0.0625 + 0.06 = 0.1225 (~8.2x less).
        let l = 32768.0;
        let k = 0.3 * l / 16.0;
        let f = memory_fraction(16.0, k, l, 0.2).unwrap();
        assert!((f - 0.1225).abs() < 1e-12);
        assert!((1.0 / f - 8.163).abs() < 0.01);
    }

    #[test]
    fn optimal_page_size_examples() {
        let s = optimal_page_size(1024.0, 16.0).unwrap();
        assert_eq!(s.exact, 8.0);
        assert_eq!(s.pow2, 8);
        let s = optimal_page_size(32768.0, 128.0).unwrap();
        assert_eq!(s.exact, 16.0);
        assert_eq!(s.pow2, 16);
        let s = optimal_page_size(100.0, 100.0).unwrap();
        assert_eq!(s.exact, 1.0);
        assert_eq!(s.pow2, 1);
        assert!(matches!(
            optimal_page_size(10.0, 20.0),
            Err(Error::Budget(_))
        ));
    }

    #[test]
    fn gap_bound_examples() {
        assert_eq!(gap_bound(64, 0.0, 16.0).unwrap(), 0.0);
        let b = gap_bound(64, 1.0, 16.0).unwrap();
        assert!((b - 4.0 * 16f64.ln().sqrt()).abs() < 1e-12);
        assert!((b - 6.66).abs() < 0.01);
        // Linear in d.
        let b2 = gap_bound(128, 1.0, 16.0).unwrap();
        assert!((b2 / b - 2.0).abs() < 1e-12);
        assert!(matches!(gap_bound(64, 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn empirical_gap_examples() {
        let mut c = PagedKvCache::new(CacheConfig::new(2, 4)).unwrap();
        c.append(&[2.0, 3.0], &[0.0, 0.0]).unwrap();
        // Singleton page: gap is exactly zero.
        assert_eq!(
            empirical_gap(&[1.0, -1.0], c.page(0).unwrap()).unwrap(),
            0.0
        );
        c.append(&[4.0, 5.0], &[0.0, 0.0]).unwrap();
        // keys {(2,3),(4,5)}, q=(1,-1): score 1, best dot -1, gap 2.
        assert_eq!(
            empirical_gap(&[1.0, -1.0], c.page(0).unwrap()).unwrap(),
            2.0
        );
    }

    #[test]
    fn empirical_gap_is_nonnegative_over_random_draws() {
        let mut rng = SplitMix64::new(0xD00D);
        let mut worst = f64::INFINITY;
        for _ in 0..500 {
            let mut c = PagedKvCache::new(CacheConfig::new(8, 16)).unwrap();
            let n = 1 + (rng.next_u64() % 16) as usize;
            for _ in 0..n {
                let k: Vec<f64> = (0..8).map(|_| rng.next_normal()).collect();
                c.append(&k, &k).unwrap();
            }
            let q: Vec<f64> = (0..8).map(|_| rng.next_normal() * 3.0).collect();
            let gap = empirical_gap(&q, c.page(0).unwrap()).unwrap();
            assert!(gap >= 0.0, "negative gap {gap}");
            worst = worst.min(gap);
        }
        assert!(worst >= 0.0);
    }

    #[test]
    fn page_key_variance_of_constant_page_is_zero() {
        let mut c = PagedKvCache::new(CacheConfig::new(3, 8)).unwrap();
        for _ in 0..5 {
            c.append(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        }
        assert_eq!(page_key_variance(c.page(0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn page_key_variance_hand_computed() {
        let mut c = PagedKvCache::new(CacheConfig::new(1, 8)).unwrap();
        c.append(&[0.0], &[0.0]).unwrap();
        c.append(&[2.0], &[0.0]).unwrap();
        // mean 1, squared deviations 1 and 1, population variance 1.
        assert_eq!(page_key_variance(c.page(0).unwrap()).unwrap(), 1.0);
    }

    #[test]
    fn speedup_identity_and_limit() {
        let p = params(1.0, 4.0, 1.0);
        let s = speedup_vs_full(&p, 1024.0, 16.0, 64.0).unwrap();
        assert_eq!(s, 1.0);

        // tau_meta -> 0 collapses the ratio to P/K exactly.
        let p0 = params(0.0, 4.0, 1.0);
        let s = speedup_vs_full(&p0, 1024.0, 16.0, 16.0).unwrap();
        assert_eq!(s, 64.0 / 16.0);
    }

    #[test]
    fn speedup_at_default_operating_point() {
        let p = params(1.0, 4.0, 1.0);
        let l = 32768.0;
        let k = 0.3 * (l / 16.0);
        let s = speedup_vs_full(&p, l, 16.0, k).unwrap();
        assert!((s - 3.24).abs() < 0.01);
        assert!((2.1..=3.4).contains(&s));
    }

    #[test]
    fn decode_latency_is_monotone() {
        let p = params(1.0, 4.0, 1.0);
        let base = decode_latency(&p, 32.0, 8.0, 16.0).unwrap();
        assert!(decode_latency(&p, 33.0, 8.0, 16.0).unwrap() > base);
        assert!(decode_latency(&p, 32.0, 9.0, 16.0).unwrap() > base);
        assert!(decode_latency(&p, 32.0, 8.0, 17.0).unwrap() > base);
    }

    #[test]
    fn gap_stats_summary() {
        let stats = GapStats::from_gaps(&[0.0, 1.0, 3.0], 0.5, 4, 16.0).unwrap();
        assert!((stats.mean_gap - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(stats.max_gap, 3.0);
        assert_eq!(stats.sigma2, 0.5);
        assert!(stats.bound > 0.0);
        assert!(stats.mean_gap <= stats.max_gap);
    }

    #[test]
    fn cost_params_validation() {
        let mut p = CostParams::default();
        assert!(p.validate().is_ok());
        p.rho = 1.5;
        assert!(p.validate().is_err());
        p.rho = 0.5;
        p.tau_hb = -1.0;
        assert!(p.validate().is_err());
    }
}
