//! Page relevance scoring, top-K selection, and the pluggable strategy layer.
//!
//! The relevance score of a page is the sign-gated corner sum over its
//! bounding box: positive query coordinates pick the per-dimension maximum,
//! negative ones the minimum. The result upper-bounds the dot product between
//! the query and every key stored in the page, so selecting the top-scoring
//! pages can never hide the cache-wide best match.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{all_finite, Precision};
use crate::paged_kv::{PageMetadata, PagedKvCache};

use self::selection_policy_names as names;

/// Page budget for the query-aware strategy: absolute page count or a
/// fraction of the current page count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PageBudget {
    Pages(usize),
    Ratio(f64),
}

impl PageBudget {
    /// Resolve to a concrete page count for a cache of `page_count` pages.
    /// Ratios round half-up and are floored at one page.
    pub fn resolve(self, page_count: usize) -> Result<usize> {
        match self {
            PageBudget::Pages(k) => {
                if k == 0 {
                    return Err(Error::InvalidConfig("page budget must be >= 1".into()));
                }
                Ok(k.min(page_count))
            }
            PageBudget::Ratio(r) => {
                if !(r > 0.0 && r <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "budget ratio must be in (0, 1], got {r}"
                    )));
                }
                let k = (r * page_count as f64).round() as usize;
                Ok(k.max(1).min(page_count))
            }
        }
    }
}

/// Which pages to attend at a decode step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SelectionPolicy {
    /// Attend every page.
    FullCache,
    /// Top-K pages by bounding-box score.
    QueryAwareTopK { budget: PageBudget },
    /// Leading sink pages plus the minimal page suffix covering the last
    /// `window_tokens` tokens.
    StreamingWindow {
        window_tokens: usize,
        sink_pages: usize,
    },
    /// Softmax the page scores and keep pages whose weight clears the
    /// threshold, at minimum the argmax page.
    SoftPrune { weight_threshold: f64 },
}

pub mod selection_policy_names {
    pub const FULL_CACHE: &str = "full_cache";
    pub const QUERY_AWARE_TOP_K: &str = "query_aware_top_k";
    pub const STREAMING_WINDOW: &str = "streaming_window";
    pub const SOFT_PRUNE: &str = "soft_prune";
}

impl SelectionPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionPolicy::FullCache => names::FULL_CACHE,
            SelectionPolicy::QueryAwareTopK { .. } => names::QUERY_AWARE_TOP_K,
            SelectionPolicy::StreamingWindow { .. } => names::STREAMING_WINDOW,
            SelectionPolicy::SoftPrune { .. } => names::SOFT_PRUNE,
        }
    }
}

/// The chosen page set for one decode step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected page indices, strictly ascending.
    pub page_ids: Vec<usize>,
    /// Bounding-box score of each selected page, aligned with `page_ids`.
    pub scores: Vec<f64>,
    /// Name of the strategy that produced this selection.
    pub strategy_name: String,
}

impl SelectionResult {
    pub fn len(&self) -> usize {
        self.page_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.page_ids.is_empty()
    }
}

/// Upper bound on `max_k q . k` over the keys summarized by `meta`.
///
/// Exact for pages holding a single key.
pub fn score_page(q: &[f64], meta: &PageMetadata) -> Result<f64> {
    score_page_at(q, meta, Precision::F64)
}

/// [`score_page`] at an explicit float width.
pub fn score_page_at(q: &[f64], meta: &PageMetadata, precision: Precision) -> Result<f64> {
    if q.len() != meta.dim() {
        return Err(Error::DimensionMismatch {
            context: "score query",
            expected: meta.dim(),
            got: q.len(),
        });
    }
    if !all_finite(q) {
        return Err(Error::NonFinite("score query"));
    }
    Ok(precision.corner_sum(q, &meta.min, &meta.max))
}

/// Bounding-box score of every page, in page order, at the cache's width.
pub fn score_all(q: &[f64], cache: &PagedKvCache) -> Result<Vec<f64>> {
    if cache.is_empty() {
        return Err(Error::EmptyCache);
    }
    let prec = cache.precision();
    cache
        .pages()
        .iter()
        .map(|page| score_page_at(q, page.meta(), prec))
        .collect()
}

/// Indices of the `k` highest scores, ties broken toward the lower index,
/// clipped to the number of scores. Returned ids are ascending.
pub fn top_k_pages(scores: &[f64], k: usize) -> Result<SelectionResult> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("top-k budget must be >= 1".into()));
    }
    if !all_finite(scores) {
        return Err(Error::NonFinite("scores"));
    }
    let k = k.min(scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Descending by score; the index itself is the tiebreak.
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    let mut page_ids: Vec<usize> = order[..k].to_vec();
    page_ids.sort_unstable();
    let picked_scores = page_ids.iter().map(|&i| scores[i]).collect();
    Ok(SelectionResult {
        page_ids,
        scores: picked_scores,
        strategy_name: names::QUERY_AWARE_TOP_K.to_string(),
    })
}

/// Run a selection strategy over the cache for query `q`.
///
/// `_prev` is the previous step's selection; none of the built-in strategies
/// condition on it, but the hook is part of the plugin surface.
pub fn select(
    policy: &SelectionPolicy,
    q: &[f64],
    cache: &PagedKvCache,
    _prev: Option<&SelectionResult>,
) -> Result<SelectionResult> {
    if cache.is_empty() {
        return Err(Error::EmptyCache);
    }
    let page_count = cache.page_count();
    match policy {
        SelectionPolicy::FullCache => {
            let scores = score_all(q, cache)?;
            Ok(SelectionResult {
                page_ids: (0..page_count).collect(),
                scores,
                strategy_name: names::FULL_CACHE.to_string(),
            })
        }
        SelectionPolicy::QueryAwareTopK { budget } => {
            let k = budget.resolve(page_count)?;
            let scores = score_all(q, cache)?;
            let mut sel = top_k_pages(&scores, k)?;
            sel.strategy_name = names::QUERY_AWARE_TOP_K.to_string();
            Ok(sel)
        }
        SelectionPolicy::StreamingWindow {
            window_tokens,
            sink_pages,
        } => {
            let s = cache.config().page_size;
            if *window_tokens < s {
                return Err(Error::InvalidConfig(format!(
                    "window_tokens ({window_tokens}) must be >= page size ({s})"
                )));
            }
            let total = cache.total_len();
            let first_window_page = if *window_tokens >= total {
                0
            } else {
                (total - window_tokens) / s
            };
            // Sinks that fall inside the window are already covered by it.
            let sink_end = (*sink_pages).min(first_window_page);
            let mut page_ids: Vec<usize> = (0..sink_end).collect();
            page_ids.extend(first_window_page..page_count);
            let prec = cache.precision();
            let scores = page_ids
                .iter()
                .map(|&id| score_page_at(q, cache.page(id)?.meta(), prec))
                .collect::<Result<Vec<_>>>()?;
            Ok(SelectionResult {
                page_ids,
                scores,
                strategy_name: names::STREAMING_WINDOW.to_string(),
            })
        }
        SelectionPolicy::SoftPrune { weight_threshold } => {
            if !(0.0..1.0).contains(weight_threshold) {
                return Err(Error::InvalidConfig(format!(
                    "soft-prune threshold must be in [0, 1), got {weight_threshold}"
                )));
            }
            let scores = score_all(q, cache)?;
            let weights = crate::attention::stable_softmax(&scores)?;
            let mut page_ids: Vec<usize> = (0..page_count)
                .filter(|&i| weights[i] >= *weight_threshold)
                .collect();
            if page_ids.is_empty() {
                // Keep at least the argmax page, lower index on ties.
                let best = (0..page_count)
                    .max_by(|&a, &b| {
                        weights[a]
                            .partial_cmp(&weights[b])
                            .expect("weights are finite")
                            .then(b.cmp(&a))
                    })
                    .expect("non-empty cache");
                page_ids.push(best);
            }
            let picked_scores = page_ids.iter().map(|&i| scores[i]).collect();
            Ok(SelectionResult {
                page_ids,
                scores: picked_scores,
                strategy_name: names::SOFT_PRUNE.to_string(),
            })
        }
    }
}

/// Shannon entropy (natural log) below the threshold?
///
/// `probs` must be non-negative and sum to one within 1e-9.
pub fn entropy_should_stop(probs: &[f64], threshold: f64) -> Result<bool> {
    if probs.is_empty() {
        return Err(Error::EmptyInput("probs"));
    }
    if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(Error::NotNormalized(
            "entries must be finite and non-negative".into(),
        ));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized(format!("sum = {sum}")));
    }
    let entropy: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    Ok(entropy < threshold)
}
