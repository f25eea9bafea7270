//! Float-width handling and the small numeric kernels shared by scoring and
//! attention.
//!
//! All kernels accumulate strictly left to right. Sequential accumulation is
//! required for the bounding-box upper bound to hold under rounding: each
//! score term dominates the matching dot-product term, and floating-point
//! addition of term-wise dominating sequences preserves the ordering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Float width every arithmetic operation on a cache runs at.
///
/// Values appended to an `F32` cache are rounded to `f32` on insert and all
/// dot products, softmaxes and weighted sums over that cache accumulate in
/// `f32`. Results are widened back to `f64` at the API boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    pub fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            32 => Ok(Precision::F32),
            64 => Ok(Precision::F64),
            other => Err(Error::InvalidConfig(format!(
                "precision must be 32 or 64 bits, got {other}"
            ))),
        }
    }

    /// Round a value to this width (identity for `F64`).
    pub fn round(self, x: f64) -> f64 {
        match self {
            Precision::F32 => x as f32 as f64,
            Precision::F64 => x,
        }
    }

    /// Dot product accumulated at this width.
    pub fn dot(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Precision::F64 => {
                let mut acc = 0.0f64;
                for (x, y) in a.iter().zip(b) {
                    acc += x * y;
                }
                acc
            }
            Precision::F32 => {
                let mut acc = 0.0f32;
                for (x, y) in a.iter().zip(b) {
                    acc += (*x as f32) * (*y as f32);
                }
                acc as f64
            }
        }
    }

    /// Sign-gated corner sum: `Σ_i q_i * (q_i >= 0 ? hi_i : lo_i)`.
    pub fn corner_sum(self, q: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        debug_assert_eq!(q.len(), lo.len());
        debug_assert_eq!(q.len(), hi.len());
        match self {
            Precision::F64 => {
                let mut acc = 0.0f64;
                for i in 0..q.len() {
                    let corner = if q[i] >= 0.0 { hi[i] } else { lo[i] };
                    acc += q[i] * corner;
                }
                acc
            }
            Precision::F32 => {
                let mut acc = 0.0f32;
                for i in 0..q.len() {
                    let qi = q[i] as f32;
                    let corner = if qi >= 0.0 {
                        hi[i] as f32
                    } else {
                        lo[i] as f32
                    };
                    acc += qi * corner;
                }
                acc as f64
            }
        }
    }

    /// In-place stable softmax at this width. `logits` must be non-empty and
    /// finite; the caller validates.
    pub(crate) fn softmax_in_place(self, logits: &mut [f64]) {
        match self {
            Precision::F64 => {
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0f64;
                for x in logits.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                for x in logits.iter_mut() {
                    *x /= sum;
                }
            }
            Precision::F32 => {
                let max = logits
                    .iter()
                    .map(|&x| x as f32)
                    .fold(f32::NEG_INFINITY, f32::max);
                let mut sum = 0.0f32;
                for x in logits.iter_mut() {
                    let e = ((*x as f32) - max).exp();
                    sum += e;
                    *x = e as f64;
                }
                for x in logits.iter_mut() {
                    *x = ((*x as f32) / sum) as f64;
                }
            }
        }
    }
}

/// All entries finite?
pub(crate) fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// Nearest-rank percentile of an ascending-sorted slice: the smallest value
/// with at least `p`% of the sample at or below it.
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    assert!((0.0..=100.0).contains(&p));
    let n = sorted.len();
    let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_bits_roundtrip() {
        assert_eq!(Precision::from_bits(32).unwrap(), Precision::F32);
        assert_eq!(Precision::from_bits(64).unwrap(), Precision::F64);
        assert!(Precision::from_bits(16).is_err());
        assert_eq!(Precision::F32.bits(), 32);
    }

    #[test]
    fn f32_rounding_is_idempotent() {
        let x = 0.1f64;
        let r = Precision::F32.round(x);
        assert_ne!(x, r);
        assert_eq!(r, Precision::F32.round(r));
        assert_eq!(x, Precision::F64.round(x));
    }

    #[test]
    fn dot_matches_hand_computation() {
        let a = [1.0, 2.0, -3.0];
        let b = [4.0, 0.5, 2.0];
        assert_eq!(Precision::F64.dot(&a, &b), 4.0 + 1.0 - 6.0);
        assert_eq!(Precision::F32.dot(&a, &b), -1.0);
    }

    #[test]
    fn corner_sum_gates_on_query_sign() {
        // q = (1, -1), lo = (2, 1), hi = (4, 3) -> 1*4 + (-1)*1 = 3
        let s = Precision::F64.corner_sum(&[1.0, -1.0], &[2.0, 1.0], &[4.0, 3.0]);
        assert_eq!(s, 3.0);
    }

    #[test]
    fn percentile_single_sample() {
        let v = [7.5];
        assert_eq!(percentile_nearest_rank(&v, 50.0), 7.5);
        assert_eq!(percentile_nearest_rank(&v, 99.0), 7.5);
    }

    #[test]
    fn percentile_ranks() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_nearest_rank(&v, 50.0), 2.0);
        assert_eq!(percentile_nearest_rank(&v, 99.0), 4.0);
        assert_eq!(percentile_nearest_rank(&v, 0.0), 1.0);
        assert_eq!(percentile_nearest_rank(&v, 100.0), 4.0);
    }
}
