//! Recall@K / Precision@K brackets from the partial AUC at `beta = K / N_-`.
//!
//! With `S = N_+ N_- A` concordant pairs among the top K negatives, a ranking
//! with `i` positives in its top K satisfies `i^2 <= S <= i (N_+ + K - i)`.
//! Solving both for `i` gives
//! `floor((N_+ + K - sqrt((N_+ + K)^2 - 4 S)) / 2) <= i <= ceil(sqrt(S))`.
//! The values are the raw formula outputs; the Precision upper end can exceed
//! 1 when `sqrt(S) > K`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair<T> {
    pub lower: T,
    pub upper: T,
}

/// Integer-valued numerators `(floor(smaller root), ceil(sqrt(S)))`.
fn hit_bounds<T: Scalar>(n_plus: usize, n_minus: usize, k: usize, opauc_value: T) -> Result<(T, T)> {
    if !opauc_value.is_finite() || opauc_value < T::zero() {
        return Err(invalid(format!("partial AUC {opauc_value} must be finite and >= 0")));
    }
    let mut s = T::of_count(n_plus) * T::of_count(n_minus) * opauc_value;
    // S is a pair count; undo rounding picked up in A = S / (N_+ N_-).
    let nearest = s.round();
    if (s - nearest).abs() <= T::of(1e-6) * T::one().max(s) {
        s = nearest;
    }
    let b = T::of_count(n_plus + k);
    let mut disc = b * b - T::of(4.0) * s;
    if disc < T::zero() {
        if disc < -T::of(1e-9) * b * b {
            return Err(invalid(format!(
                "partial AUC {opauc_value} exceeds the maximum for N+={n_plus}, N-={n_minus}, K={k}"
            )));
        }
        disc = T::zero();
    }
    let two = T::of(2.0);
    let lower = ((b - disc.sqrt()) / two).floor().max(T::zero());
    let upper = s.sqrt().ceil();
    Ok((lower, upper))
}

pub fn recall_bounds<T: Scalar>(
    n_plus: usize,
    n_minus: usize,
    k: usize,
    opauc_value: T,
) -> Result<BoundPair<T>> {
    if n_plus == 0 {
        return Err(invalid("recall bounds need N+ >= 1"));
    }
    let (lo, hi) = hit_bounds(n_plus, n_minus, k, opauc_value)?;
    let np = T::of_count(n_plus);
    Ok(BoundPair { lower: lo / np, upper: hi / np })
}

pub fn precision_bounds<T: Scalar>(
    n_plus: usize,
    n_minus: usize,
    k: usize,
    opauc_value: T,
) -> Result<BoundPair<T>> {
    if k == 0 {
        return Err(invalid("precision bounds need K >= 1"));
    }
    let (lo, hi) = hit_bounds(n_plus, n_minus, k, opauc_value)?;
    let kk = T::of_count(k);
    Ok(BoundPair { lower: lo / kk, upper: hi / kk })
}
