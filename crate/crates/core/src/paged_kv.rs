//! Append-only paged key/value storage with per-page bounding-box metadata.
//!
//! Keys and values are grouped into fixed-size pages. Every page keeps the
//! per-dimension minimum and maximum of its stored keys, maintained
//! incrementally on insert. The metadata gives, for any query, a cheap upper
//! bound on the best query-key dot product inside the page, which is what
//! page selection runs on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{all_finite, Precision};

/// Cache geometry: head dimension, page size, and compute float width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheConfig {
    /// Head dimension of every key, value and query vector.
    pub dim: usize,
    /// Tokens per page.
    pub page_size: usize,
    /// Float width all arithmetic over this cache runs at.
    pub precision: Precision,
}

impl CacheConfig {
    pub fn new(dim: usize, page_size: usize) -> Self {
        CacheConfig {
            dim,
            page_size,
            precision: Precision::F64,
        }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("head dimension must be >= 1".into()));
        }
        if self.page_size == 0 {
            return Err(Error::InvalidConfig("page size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-dimension bounds of the keys stored in one page.
///
/// Not representable for an empty page: a page only exists once it holds a
/// key, so sentinel bounds (and the NaN they would leak into scoring) never
/// appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageMetadata {
    /// Per-dimension minima over the page's keys.
    pub min: Vec<f64>,
    /// Per-dimension maxima over the page's keys.
    pub max: Vec<f64>,
}

impl PageMetadata {
    /// Metadata of a page holding exactly one key: both bounds equal the key.
    fn singleton(key: &[f64]) -> Self {
        PageMetadata {
            min: key.to_vec(),
            max: key.to_vec(),
        }
    }

    /// Widen the bounds to cover one more key.
    fn absorb(&mut self, key: &[f64]) {
        for (i, &k) in key.iter().enumerate() {
            if k < self.min[i] {
                self.min[i] = k;
            }
            if k > self.max[i] {
                self.max[i] = k;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }
}

/// Exact per-dimension min/max over a batch of keys.
///
/// Batch counterpart of the incremental update in [`PagedKvCache::append`];
/// the two must agree bit-exactly, and both run through the same absorb path
/// so that equality is structural.
pub fn recompute_metadata<'a, I>(keys: I) -> Result<PageMetadata>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = keys.into_iter();
    let first = iter.next().ok_or(Error::EmptyPage)?;
    let mut meta = PageMetadata::singleton(first);
    for key in iter {
        if key.len() != meta.dim() {
            return Err(Error::DimensionMismatch {
                context: "recompute_metadata key",
                expected: meta.dim(),
                got: key.len(),
            });
        }
        meta.absorb(key);
    }
    Ok(meta)
}

/// One fixed-size page of keys and values, stored flat in token order.
#[derive(Debug, Clone, PartialEq)]
pub struct KvPage {
    /// Zero-based index of this page within the cache.
    pub page_id: usize,
    dim: usize,
    keys: Vec<f64>,
    values: Vec<f64>,
    meta: PageMetadata,
}

impl KvPage {
    fn with_first_token(page_id: usize, key: &[f64], value: &[f64]) -> Self {
        KvPage {
            page_id,
            dim: key.len(),
            keys: key.to_vec(),
            values: value.to_vec(),
            meta: PageMetadata::singleton(key),
        }
    }

    fn push(&mut self, key: &[f64], value: &[f64]) {
        self.keys.extend_from_slice(key);
        self.values.extend_from_slice(value);
        self.meta.absorb(key);
    }

    /// Tokens currently stored in this page.
    pub fn len(&self) -> usize {
        self.keys.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn key(&self, i: usize) -> &[f64] {
        &self.keys[i * self.dim..(i + 1) * self.dim]
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn keys_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.keys.chunks_exact(self.dim)
    }

    pub fn values_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn meta(&self) -> &PageMetadata {
        &self.meta
    }
}

/// Append-only paged store for per-token key and value vectors.
///
/// Single writer per cache; any number of readers may run between mutations.
#[derive(Debug, Clone, PartialEq)]
pub struct PagedKvCache {
    config: CacheConfig,
    pages: Vec<KvPage>,
    total_len: usize,
}

impl PagedKvCache {
    pub fn new(config: CacheConfig) -> Result<Self> {
        config.validate()?;
        Ok(PagedKvCache {
            config,
            pages: Vec::new(),
            total_len: 0,
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn precision(&self) -> Precision {
        self.config.precision
    }

    /// Total tokens stored.
    pub fn total_len(&self) -> usize {
        self.total_len
    }

    pub fn is_empty(&self) -> bool {
        self.total_len == 0
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn pages(&self) -> &[KvPage] {
        &self.pages
    }

    pub fn page(&self, id: usize) -> Result<&KvPage> {
        self.pages.get(id).ok_or(Error::PageIndexOutOfRange {
            id,
            pages: self.pages.len(),
        })
    }

    /// Append one (key, value) token. Opens a new page when the last page is
    /// full; otherwise widens the last page's bounds in place.
    pub fn append(&mut self, key: &[f64], value: &[f64]) -> Result<()> {
        let d = self.config.dim;
        if key.len() != d {
            return Err(Error::DimensionMismatch {
                context: "append key",
                expected: d,
                got: key.len(),
            });
        }
        if value.len() != d {
            return Err(Error::DimensionMismatch {
                context: "append value",
                expected: d,
                got: value.len(),
            });
        }
        if !all_finite(key) {
            return Err(Error::NonFinite("append key"));
        }
        if !all_finite(value) {
            return Err(Error::NonFinite("append value"));
        }

        // Storage honors the configured width: round on insert so that the
        // bounds are exactly representable at that width.
        let prec = self.config.precision;
        let key: Vec<f64> = key.iter().map(|&x| prec.round(x)).collect();
        let value: Vec<f64> = value.iter().map(|&x| prec.round(x)).collect();

        match self.pages.last_mut() {
            Some(last) if last.len() < self.config.page_size => last.push(&key, &value),
            _ => {
                let id = self.pages.len();
                self.pages.push(KvPage::with_first_token(id, &key, &value));
            }
        }
        self.total_len += 1;
        Ok(())
    }

    /// Concatenated keys and values of the named pages, flat, in ascending
    /// page order with in-page positions preserved.
    ///
    /// `page_ids` must be strictly ascending and in range.
    pub fn gather(&self, page_ids: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut keys = Vec::new();
        let mut values = Vec::new();
        let mut prev: Option<usize> = None;
        for &id in page_ids {
            if let Some(p) = prev {
                if id <= p {
                    return Err(Error::InvalidSelection(format!(
                        "page ids must be strictly ascending, got {id} after {p}"
                    )));
                }
            }
            prev = Some(id);
            let page = self.page(id)?;
            keys.extend_from_slice(&page.keys);
            values.extend_from_slice(&page.values);
        }
        Ok((keys, values))
    }

    /// Tokens covered by a gather of `page_ids`.
    pub fn gathered_len(&self, page_ids: &[usize]) -> Result<usize> {
        let mut n = 0;
        for &id in page_ids {
            n += self.page(id)?.len();
        }
        Ok(n)
    }

    /// Test hook: shift one metadata bound so that box containment breaks.
    /// Used by the verification command's negative path; never called by the
    /// decode pipeline.
    #[doc(hidden)]
    pub fn corrupt_page_metadata(&mut self, page_id: usize, dim: usize, delta: f64) -> Result<()> {
        let pages = self.pages.len();
        let page = self
            .pages
            .get_mut(page_id)
            .ok_or(Error::PageIndexOutOfRange { id: page_id, pages })?;
        page.meta.max[dim] -= delta;
        page.meta.min[dim] += delta;
        Ok(())
    }
}
