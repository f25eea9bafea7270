//! Exact full attention (the oracle) and sparse attention over a page
//! selection, sharing one stable-softmax kernel.
//!
//! Logits are raw dot products: there is no 1/sqrt(d) scaling by default.
//! [`AttentionParams::scale_logits`] turns scaling on for experiments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{all_finite, Precision};
use crate::paged_kv::PagedKvCache;
use crate::selection::SelectionResult;

/// Result of attending one query over a set of cached tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionOutput {
    /// Weighted sum of the attended value vectors.
    pub output: Vec<f64>,
    /// Softmax weight of each attended token, in token order.
    pub weights: Vec<f64>,
    /// Number of tokens attended.
    pub attended_tokens: usize,
}

/// Optional knobs for the attention kernels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AttentionParams {
    /// Multiply logits by 1/sqrt(d) before the softmax. Off by default.
    pub scale_logits: bool,
}

/// Numerically stable softmax: `exp(x - max) / sum`.
pub fn stable_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptyInput("logits"));
    }
    if !all_finite(logits) {
        return Err(Error::NonFinite("logits"));
    }
    let mut probs = logits.to_vec();
    Precision::F64.softmax_in_place(&mut probs);
    Ok(probs)
}

/// Attend over every cached token, in token order.
pub fn full_attention(q: &[f64], cache: &PagedKvCache) -> Result<AttentionOutput> {
    full_attention_with(q, cache, AttentionParams::default())
}

pub fn full_attention_with(
    q: &[f64],
    cache: &PagedKvCache,
    params: AttentionParams,
) -> Result<AttentionOutput> {
    if cache.is_empty() {
        return Err(Error::EmptyCache);
    }
    let all_pages: Vec<usize> = (0..cache.page_count()).collect();
    attend_pages(q, cache, &all_pages, params)
}

/// Identical computation to [`full_attention`] restricted to the selected
/// pages; the softmax normalizes over selected tokens only.
pub fn sparse_attention(
    q: &[f64],
    cache: &PagedKvCache,
    sel: &SelectionResult,
) -> Result<AttentionOutput> {
    sparse_attention_with(q, cache, sel, AttentionParams::default())
}

pub fn sparse_attention_with(
    q: &[f64],
    cache: &PagedKvCache,
    sel: &SelectionResult,
    params: AttentionParams,
) -> Result<AttentionOutput> {
    if sel.is_empty() {
        return Err(Error::InvalidSelection("no pages selected".into()));
    }
    attend_pages(q, cache, &sel.page_ids, params)
}

fn attend_pages(
    q: &[f64],
    cache: &PagedKvCache,
    page_ids: &[usize],
    params: AttentionParams,
) -> Result<AttentionOutput> {
    let d = cache.config().dim;
    if q.len() != d {
        return Err(Error::DimensionMismatch {
            context: "attention query",
            expected: d,
            got: q.len(),
        });
    }
    if !all_finite(q) {
        return Err(Error::NonFinite("attention query"));
    }

    // Same token walk as gather (ascending pages, in-page order preserved)
    // without materializing the concatenation: full attention over a long
    // cache would otherwise copy the entire store every decode step.
    let mut prev: Option<usize> = None;
    let mut n = 0usize;
    for &id in page_ids {
        if let Some(p) = prev {
            if id <= p {
                return Err(Error::InvalidSelection(format!(
                    "page ids must be strictly ascending, got {id} after {p}"
                )));
            }
        }
        prev = Some(id);
        n += cache.page(id)?.len();
    }
    if n == 0 {
        return Err(Error::InvalidSelection("selection covers no tokens".into()));
    }

    let prec = cache.precision();
    let mut weights: Vec<f64> = Vec::with_capacity(n);
    for &id in page_ids {
        let page = cache.page(id)?;
        for k in page.keys_iter() {
            weights.push(prec.dot(q, k));
        }
    }
    if params.scale_logits {
        let scale = 1.0 / (d as f64).sqrt();
        for w in weights.iter_mut() {
            *w = prec.round(*w * scale);
        }
    }
    prec.softmax_in_place(&mut weights);

    let mut output = vec![0.0f64; d];
    match prec {
        Precision::F64 => {
            let mut wi = weights.iter();
            for &id in page_ids {
                for v in cache.page(id)?.values_iter() {
                    let w = *wi.next().expect("one weight per token");
                    for (o, x) in output.iter_mut().zip(v) {
                        *o += w * x;
                    }
                }
            }
        }
        Precision::F32 => {
            let mut acc = vec![0.0f32; d];
            let mut wi = weights.iter();
            for &id in page_ids {
                for v in cache.page(id)?.values_iter() {
                    let w = *wi.next().expect("one weight per token") as f32;
                    for (o, x) in acc.iter_mut().zip(v) {
                        *o += w * (*x as f32);
                    }
                }
            }
            for (o, a) in output.iter_mut().zip(acc) {
                *o = a as f64;
            }
        }
    }

    Ok(AttentionOutput {
        output,
        weights,
        attended_tokens: n,
    })
}

/// Relative L2 error of `a` against reference `b`:
/// `||a - b|| / max(||b||, 1e-12)`.
pub fn output_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "output_error",
            expected: b.len(),
            got: a.len(),
        });
    }
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    Ok(diff / norm.max(1e-12))
}
