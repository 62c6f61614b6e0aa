//! Ranking metrics for one context: Recall/Precision/NDCG@K, AUC, one-way
//! partial AUC over the top fraction of negatives, its normalized form, and
//! the Recall/Precision bounds implied by a partial-AUC value.
//!
//! Everything is computed from a [`RankedList`]: labels in descending score
//! order plus, for every negative, how many positives score strictly above
//! it. Ties in the merged order are broken by ascending item id; the
//! pairwise indicator is strict, so tied (positive, negative) pairs count 0.

mod bounds;
mod evaluate;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Scalar;

pub use bounds::{precision_bounds, recall_bounds, BoundPair};
pub use evaluate::{evaluate_model, Metric, MetricRow, Param, RankedEvaluation, Scorer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem<T> {
    pub id: u32,
    pub score: T,
    pub positive: bool,
}

/// Scores of the positive and negative populations of one context.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRanking<T> {
    items: Vec<ScoredItem<T>>,
    n_pos: usize,
    n_neg: usize,
}

impl<T: Scalar> LabeledRanking<T> {
    /// Ids are assigned by position: positives `0..n_+`, then negatives.
    pub fn new(pos_scores: &[T], neg_scores: &[T]) -> Result<Self> {
        let items = pos_scores
            .iter()
            .map(|&s| (s, true))
            .chain(neg_scores.iter().map(|&s| (s, false)))
            .enumerate()
            .map(|(id, (score, positive))| ScoredItem { id: id as u32, score, positive })
            .collect();
        Self::from_items(items)
    }

    pub fn from_items(items: Vec<ScoredItem<T>>) -> Result<Self> {
        if let Some(bad) = items.iter().find(|it| !it.score.is_finite()) {
            return Err(invalid(format!("non-finite score for item {}", bad.id)));
        }
        let n_pos = items.iter().filter(|it| it.positive).count();
        let n_neg = items.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Err(invalid(format!(
                "ranking needs both labels, got {n_pos} positives and {n_neg} negatives"
            )));
        }
        Ok(Self { items, n_pos, n_neg })
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    pub fn n_neg(&self) -> usize {
        self.n_neg
    }

    pub fn items(&self) -> &[ScoredItem<T>] {
        &self.items
    }

    pub fn pos_scores(&self) -> impl Iterator<Item = T> + '_ {
        self.items.iter().filter(|it| it.positive).map(|it| it.score)
    }

    pub fn neg_scores(&self) -> impl Iterator<Item = T> + '_ {
        self.items.iter().filter(|it| !it.positive).map(|it| it.score)
    }

    /// Sorts descending by score, ascending id on ties.
    pub fn ranked(&self) -> RankedList {
        let mut order: Vec<&ScoredItem<T>> = self.items.iter().collect();
        order.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then(a.id.cmp(&b.id))
        });
        let mut labels = Vec::with_capacity(order.len());
        let mut prefix = Vec::with_capacity(self.n_neg + 1);
        prefix.push(0u64);
        let mut strictly_above = 0u64;
        let mut pos_in_group = 0u64;
        let mut group_score = None;
        for it in order {
            if group_score != Some(it.score) {
                strictly_above += pos_in_group;
                pos_in_group = 0;
                group_score = Some(it.score);
            }
            labels.push(it.positive);
            if it.positive {
                pos_in_group += 1;
            } else {
                let last = *prefix.last().unwrap();
                prefix.push(last + strictly_above);
            }
        }
        RankedList { labels, n_pos: self.n_pos, concordance_prefix: prefix }
    }
}

/// Labels in descending score order with cumulative concordance counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    labels: Vec<bool>,
    n_pos: usize,
    /// `concordance_prefix[m]`: concordant (positive, negative) pairs summed
    /// over the `m` highest-ranked negatives.
    concordance_prefix: Vec<u64>,
}

impl RankedList {
    /// Builds from labels already in rank order with pairwise-distinct scores.
    pub fn from_sorted_labels(labels: Vec<bool>) -> Result<Self> {
        let n_pos = labels.iter().filter(|&&l| l).count();
        let n_neg = labels.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Err(invalid(format!(
                "ranking needs both labels, got {n_pos} positives and {n_neg} negatives"
            )));
        }
        let mut prefix = Vec::with_capacity(n_neg + 1);
        prefix.push(0u64);
        let mut above = 0u64;
        for &l in &labels {
            if l {
                above += 1;
            } else {
                let last = *prefix.last().unwrap();
                prefix.push(last + above);
            }
        }
        Ok(Self { labels, n_pos, concordance_prefix: prefix })
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn n_pos(&self) -> usize {
        self.n_pos
    }

    pub fn n_neg(&self) -> usize {
        self.labels.len() - self.n_pos
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Positives among the first `k` ranks.
    pub fn hits_at(&self, k: usize) -> usize {
        self.labels.iter().take(k).filter(|&&l| l).count()
    }

    /// # Panics
    /// If `k == 0`.
    pub fn recall_at_k<T: Scalar>(&self, k: usize) -> T {
        assert!(k >= 1, "K must be at least 1");
        T::of_count(self.hits_at(k)) / T::of_count(self.n_pos)
    }

    /// # Panics
    /// If `k == 0`.
    pub fn precision_at_k<T: Scalar>(&self, k: usize) -> T {
        assert!(k >= 1, "K must be at least 1");
        T::of_count(self.hits_at(k)) / T::of_count(k)
    }

    /// DCG@K / IDCG@K with gain `1 / log2(rank + 1)` on 1-based ranks.
    ///
    /// # Panics
    /// If `k == 0`.
    pub fn ndcg_at_k<T: Scalar>(&self, k: usize) -> T {
        assert!(k >= 1, "K must be at least 1");
        let gain = |rank: usize| T::one() / T::of_count(rank + 1).log2();
        let dcg: T = self
            .labels
            .iter()
            .take(k)
            .enumerate()
            .filter(|(_, &l)| l)
            .map(|(p, _)| gain(p + 1))
            .sum();
        let idcg: T = (1..=self.n_pos.min(k)).map(gain).sum();
        dcg / idcg
    }

    /// Concordant pairs against the `m` highest-ranked negatives.
    pub fn concordant_top(&self, m: usize) -> u64 {
        self.concordance_prefix[m.min(self.n_neg())]
    }

    pub fn auc<T: Scalar>(&self) -> T {
        self.opauc_top(self.n_neg())
    }

    /// Partial AUC over the `m` top negatives, normalized by `n_+ n_-`.
    pub fn opauc_top<T: Scalar>(&self, m: usize) -> T {
        let denom = self.n_pos as f64 * self.n_neg() as f64;
        T::of(self.concordant_top(m) as f64) / T::of(denom)
    }

    /// # Panics
    /// If `beta` is not in `(0, 1]`.
    pub fn opauc<T: Scalar>(&self, beta: f64) -> OpaucValue<T> {
        let m = top_negative_count(self.n_neg(), beta);
        OpaucValue { beta, value: self.opauc_top(m), m_beta: m }
    }

    /// Affine map of the partial AUC onto `[0.5, 1]` using its permutation
    /// extrema `0` and `m / n_-`.
    ///
    /// # Panics
    /// If `beta` is not in `(0, 1]`.
    pub fn opauc_normalized<T: Scalar>(&self, beta: f64) -> T {
        let m = top_negative_count(self.n_neg(), beta);
        self.opauc_normalized_top(m)
    }

    pub fn opauc_normalized_top<T: Scalar>(&self, m: usize) -> T {
        // A / A_max = concordant / (n_+ m)
        let ratio = self.concordant_top(m) as f64 / (self.n_pos as f64 * m as f64);
        T::of(0.5) * (T::one() + T::of(ratio))
    }
}

/// Number of top negatives a partial AUC at `beta` ranges over:
/// `max(1, floor(n_- beta))`, with a 1e-9 allowance for `beta = K / n_-`
/// arriving as a rounded float.
///
/// # Panics
/// If `beta` is not in `(0, 1]`.
pub fn top_negative_count(n_neg: usize, beta: f64) -> usize {
    assert!(beta > 0.0 && beta <= 1.0, "beta {beta} not in (0, 1]");
    let m = (n_neg as f64 * beta + 1e-9).floor() as usize;
    m.clamp(1, n_neg.max(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpaucValue<T> {
    pub beta: f64,
    pub value: T,
    pub m_beta: usize,
}

pub fn recall_at_k<T: Scalar>(r: &LabeledRanking<T>, k: usize) -> T {
    r.ranked().recall_at_k(k)
}

pub fn precision_at_k<T: Scalar>(r: &LabeledRanking<T>, k: usize) -> T {
    r.ranked().precision_at_k(k)
}

pub fn ndcg_at_k<T: Scalar>(r: &LabeledRanking<T>, k: usize) -> T {
    r.ranked().ndcg_at_k(k)
}

pub fn auc<T: Scalar>(r: &LabeledRanking<T>) -> T {
    r.ranked().auc()
}

pub fn opauc<T: Scalar>(r: &LabeledRanking<T>, beta: f64) -> OpaucValue<T> {
    r.ranked().opauc(beta)
}

pub fn opauc_normalized<T: Scalar>(r: &LabeledRanking<T>, beta: f64) -> T {
    r.ranked().opauc_normalized(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Distinct descending scores realising the given label order.
    fn from_labels(labels: &[bool]) -> LabeledRanking<f64> {
        let n = labels.len();
        let items = labels
            .iter()
            .enumerate()
            .map(|(p, &positive)| ScoredItem { id: p as u32, score: (n - p) as f64, positive })
            .collect();
        LabeledRanking::from_items(items).unwrap()
    }

    const PMNMM: [bool; 5] = [true, false, true, false, false];

    #[test]
    fn top_k_hand_counts() {
        let r = from_labels(&PMNMM);
        assert_eq!(recall_at_k(&r, 2), 0.5);
        assert_eq!(precision_at_k(&r, 2), 0.5);
        assert_eq!(recall_at_k(&r, 10), 1.0);
        let perfect = from_labels(&[true, true, false, false]);
        assert_eq!(recall_at_k(&perfect, 2), 1.0);
        assert_eq!(precision_at_k(&perfect, 2), 1.0);
        let worst = from_labels(&[false, false, true]);
        assert_eq!(recall_at_k(&worst, 2), 0.0);
    }

    #[test]
    fn ndcg_hand_value() {
        let r = from_labels(&[true, false, true]);
        let expected = (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert_relative_eq!(ndcg_at_k(&r, 3), expected, epsilon = 1e-15);
        assert_relative_eq!(ndcg_at_k(&r, 3), 0.9197, epsilon = 1e-4);
        assert_eq!(ndcg_at_k(&from_labels(&[true, true, false]), 2), 1.0);
        assert_eq!(ndcg_at_k(&from_labels(&[false, false, true]), 2), 0.0);
    }

    #[test]
    fn auc_and_opauc_hand_values() {
        let r = LabeledRanking::new(&[0.9, 0.4], &[0.6, 0.1]).unwrap();
        assert_eq!(auc(&r), 0.75);
        let half = opauc(&r, 0.5);
        assert_eq!(half.m_beta, 1);
        assert_eq!(half.value, 0.25);
        assert_eq!(opauc(&r, 1.0).value, auc(&r));
        assert_eq!(opauc_normalized(&r, 0.5), 0.75);
    }

    #[test]
    fn opauc_extremes() {
        let perfect = LabeledRanking::new(&[3.0, 2.0], &[1.0, 0.0]).unwrap();
        assert_eq!(opauc(&perfect, 0.5).value, 0.5);
        assert_eq!(opauc_normalized(&perfect, 0.5), 1.0);
        let worst = LabeledRanking::new(&[0.0, 1.0], &[3.0, 2.0]).unwrap();
        assert_eq!(opauc(&worst, 0.5).value, 0.0);
        assert_eq!(opauc_normalized(&worst, 0.5), 0.5);
    }

    #[test]
    fn ties_are_discordant_and_broken_by_id() {
        let r = LabeledRanking::new(&[1.0], &[1.0, 0.0]).unwrap();
        assert_eq!(auc(&r), 0.5);
        let ranked = r.ranked();
        // positive has id 0, so it precedes the tied negative
        assert_eq!(ranked.labels(), &[true, false, false]);
        assert_eq!(ranked.hits_at(1), 1);
    }

    #[test]
    fn rejects_degenerate_rankings() {
        assert!(LabeledRanking::<f64>::new(&[], &[1.0]).is_err());
        assert!(LabeledRanking::<f64>::new(&[1.0], &[]).is_err());
        assert!(LabeledRanking::new(&[f64::NAN], &[1.0]).is_err());
        assert!(RankedList::from_sorted_labels(vec![true, true]).is_err());
    }

    #[test]
    fn top_count_rounding() {
        assert_eq!(top_negative_count(3, 2.0 / 3.0), 2);
        assert_eq!(top_negative_count(800, 1.0 / 800.0), 1);
        assert_eq!(top_negative_count(10, 0.01), 1);
        assert_eq!(top_negative_count(10, 0.35), 3);
        assert_eq!(top_negative_count(10, 1.0), 10);
    }

    #[test]
    fn f32_agrees_with_f64() {
        let r64 = LabeledRanking::new(&[0.9, 0.4, 0.3], &[0.6, 0.1, 0.35, 0.2]).unwrap();
        let r32 = LabeledRanking::new(&[0.9f32, 0.4, 0.3], &[0.6, 0.1, 0.35, 0.2]).unwrap();
        assert_relative_eq!(auc(&r32) as f64, auc(&r64), epsilon = 1e-6);
        assert_relative_eq!(ndcg_at_k(&r32, 3) as f64, ndcg_at_k(&r64, 3), epsilon = 1e-6);
    }
}
