//! Negative-sampling distributions over a uniformly drawn candidate pool.
//!
//! Each positive pair `(c, i)` draws a pool of up to `N` negatives without
//! replacement and places a distribution on it:
//!
//! * uniform: `1 / |pool|`
//! * popularity: proportional to `count^0.75`
//! * fixed softmax: `softmax(score / tau)`
//! * DNS(M, N): `1 / M` on the `M` highest-scored pool items
//! * Softmax-v(rho, N): `softmax(L / tau)` over pairwise losses `L`, with
//!   `tau = sqrt(Var(L) / (2 rho))` recomputed for every pair.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ItemId;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Lower limit for the adaptive temperature.
pub const TAU_FLOOR: f64 = 1e-8;

/// Exponent applied to interaction counts by the popularity sampler.
pub const POPULARITY_EXPONENT: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerSpec {
    Uniform { pool: usize },
    Popularity { pool: usize },
    FixedSoftmax { tau: f64, pool: usize },
    Dns { m: usize, pool: usize },
    SoftmaxV { rho: f64, pool: usize },
}

/// Flat `sampler.*` configuration keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerKeys {
    pub kind: String,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl TryFrom<&SamplerKeys> for SamplerSpec {
    type Error = crate::Error;

    fn try_from(keys: &SamplerKeys) -> Result<Self> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| invalid(format!("sampler.{name} is required for kind {}", keys.kind)))
        };
        let pool = keys.n.unwrap_or(1);
        let spec = match keys.kind.as_str() {
            "uniform" => SamplerSpec::Uniform { pool },
            "popularity" => SamplerSpec::Popularity { pool },
            "fixed_softmax" => SamplerSpec::FixedSoftmax { tau: need(keys.tau, "tau")?, pool },
            "dns" => SamplerSpec::Dns {
                m: keys.m.ok_or_else(|| invalid("sampler.M is required for kind dns"))?,
                pool,
            },
            "softmax_v" => SamplerSpec::SoftmaxV { rho: need(keys.rho, "rho")?, pool },
            other => {
                return Err(invalid(format!(
                    "unknown sampler.kind {other:?} (uniform, popularity, fixed_softmax, dns, softmax_v)"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<&SamplerSpec> for SamplerKeys {
    fn from(spec: &SamplerSpec) -> Self {
        let mut keys = SamplerKeys { kind: spec.kind().to_string(), n: Some(spec.pool_size()), ..Default::default() };
        match *spec {
            SamplerSpec::FixedSoftmax { tau, .. } => keys.tau = Some(tau),
            SamplerSpec::Dns { m, .. } => keys.m = Some(m),
            SamplerSpec::SoftmaxV { rho, .. } => keys.rho = Some(rho),
            SamplerSpec::Uniform { .. } | SamplerSpec::Popularity { .. } => {}
        }
        keys
    }
}

impl SamplerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            SamplerSpec::Uniform { .. } => "uniform",
            SamplerSpec::Popularity { .. } => "popularity",
            SamplerSpec::FixedSoftmax { .. } => "fixed_softmax",
            SamplerSpec::Dns { .. } => "dns",
            SamplerSpec::SoftmaxV { .. } => "softmax_v",
        }
    }

    pub fn pool_size(&self) -> usize {
        match *self {
            SamplerSpec::Uniform { pool }
            | SamplerSpec::Popularity { pool }
            | SamplerSpec::FixedSoftmax { pool, .. }
            | SamplerSpec::Dns { pool, .. }
            | SamplerSpec::SoftmaxV { pool, .. } => pool,
        }
    }

    pub fn with_pool_size(self, pool: usize) -> Self {
        match self {
            SamplerSpec::Uniform { .. } => SamplerSpec::Uniform { pool },
            SamplerSpec::Popularity { .. } => SamplerSpec::Popularity { pool },
            SamplerSpec::FixedSoftmax { tau, .. } => SamplerSpec::FixedSoftmax { tau, pool },
            SamplerSpec::Dns { m, .. } => SamplerSpec::Dns { m, pool },
            SamplerSpec::SoftmaxV { rho, .. } => SamplerSpec::SoftmaxV { rho, pool },
        }
    }

    /// Short label such as `DNS(5,200)` for reports.
    pub fn label(&self) -> String {
        match *self {
            SamplerSpec::Uniform { pool } => format!("Uniform({pool})"),
            SamplerSpec::Popularity { pool } => format!("Popularity({pool})"),
            SamplerSpec::FixedSoftmax { tau, pool } => format!("Softmax(tau={tau},{pool})"),
            SamplerSpec::Dns { m, pool } => format!("DNS({m},{pool})"),
            SamplerSpec::SoftmaxV { rho, pool } => format!("Softmax-v({rho},{pool})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_size() == 0 {
            return Err(invalid("sampler pool size N must be >= 1"));
        }
        match *self {
            SamplerSpec::FixedSoftmax { tau, .. } if !(tau > 0.0 && tau.is_finite()) => {
                Err(invalid(format!("sampler.tau must be positive, got {tau}")))
            }
            SamplerSpec::SoftmaxV { rho, .. } if !(rho > 0.0 && rho.is_finite()) => {
                Err(invalid(format!("sampler.rho must be positive, got {rho}")))
            }
            SamplerSpec::Dns { m, pool } if m == 0 || m > pool => {
                Err(invalid(format!("sampler.M = {m} must satisfy 1 <= M <= N = {pool}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether the distribution depends on model scores.
    pub fn needs_scores(&self) -> bool {
        matches!(
            self,
            SamplerSpec::FixedSoftmax { .. } | SamplerSpec::Dns { .. } | SamplerSpec::SoftmaxV { .. }
        )
    }

    /// Distribution over `pool` given the positive's score and the pool
    /// scores (aligned with `pool`). `item_counts` feeds the popularity kind.
    pub fn distribution<T: Scalar>(
        &self,
        pool: Vec<ItemId>,
        pool_scores: &[T],
        positive_score: T,
        item_counts: Option<&[u64]>,
    ) -> PoolDistribution<T> {
        debug_assert!(!self.needs_scores() || pool_scores.len() == pool.len());
        let probs = match *self {
            SamplerSpec::Uniform { .. } => vec![T::one() / T::of_count(pool.len()); pool.len()],
            SamplerSpec::Popularity { .. } => match item_counts {
                Some(counts) => popularity_probabilities(&pool, counts, POPULARITY_EXPONENT),
                None => vec![T::one() / T::of_count(pool.len()); pool.len()],
            },
            SamplerSpec::FixedSoftmax { tau, .. } => fixed_softmax_probabilities(pool_scores, T::of(tau)),
            SamplerSpec::Dns { m, .. } => dns_probabilities(&pool, pool_scores, m.min(pool.len())),
            SamplerSpec::SoftmaxV { rho, .. } => {
                let losses: Vec<T> = pool_scores
                    .iter()
                    .map(|&s| crate::trainer::surrogate_loss(positive_score - s))
                    .collect();
                softmax_v_probabilities(&losses, T::of(rho))
            }
        };
        PoolDistribution { pool, probs }
    }
}

/// Candidate negatives with their sampling probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolDistribution<T> {
    pub pool: Vec<ItemId>,
    pub probs: Vec<T>,
}

impl<T: Scalar> PoolDistribution<T> {
    pub fn one_hot(item: ItemId) -> Self {
        Self { pool: vec![item], probs: vec![T::one()] }
    }

    pub fn len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, T)> + '_ {
        self.pool.iter().copied().zip(self.probs.iter().copied())
    }

    /// Checks alignment, nonnegativity, distinct items and unit mass within `tol`.
    pub fn validate(&self, tol: T) -> Result<()> {
        if self.pool.len() != self.probs.len() || self.pool.is_empty() {
            return Err(invalid("pool and probabilities must be nonempty and aligned"));
        }
        if self.probs.iter().any(|p| p.is_nan() || *p < T::zero()) {
            return Err(invalid("negative or NaN sampling probability"));
        }
        let total: T = self.probs.iter().copied().sum();
        if (total - T::one()).abs() > tol {
            return Err(invalid(format!("probabilities sum to {total}")));
        }
        let distinct: HashSet<_> = self.pool.iter().collect();
        if distinct.len() != self.pool.len() {
            return Err(invalid("duplicate item in pool"));
        }
        Ok(())
    }
}

/// `min(n, |negatives|)` distinct negatives, uniformly without replacement.
pub fn draw_pool<R: Rng + ?Sized>(negatives: &[ItemId], n: usize, rng: &mut R) -> Vec<ItemId> {
    if negatives.len() <= n {
        return negatives.to_vec();
    }
    rand::seq::index::sample(rng, negatives.len(), n)
        .into_iter()
        .map(|ix| negatives[ix])
        .collect()
}

/// Pool drawn from the complement of the sorted `positives` within
/// `0..num_items`, without materialising the complement when it is large.
pub fn draw_pool_complement<R: Rng + ?Sized>(
    num_items: usize,
    positives: &[ItemId],
    n: usize,
    rng: &mut R,
) -> Vec<ItemId> {
    let n_neg = num_items - positives.len();
    if n_neg <= n.saturating_mul(4) {
        let negatives: Vec<ItemId> = complement(num_items, positives).collect();
        return draw_pool(&negatives, n, rng);
    }
    // Sequential rejection; each accepted item is uniform over the
    // not-yet-chosen negatives, which yields a uniform n-subset.
    let mut chosen = HashSet::with_capacity(n);
    let mut pool = Vec::with_capacity(n);
    while pool.len() < n {
        let item = rng.random_range(0..num_items as ItemId);
        if positives.binary_search(&item).is_err() && chosen.insert(item) {
            pool.push(item);
        }
    }
    pool
}

fn complement(num_items: usize, positives: &[ItemId]) -> impl Iterator<Item = ItemId> + '_ {
    let mut next = 0usize;
    (0..num_items as ItemId).filter(move |&item| {
        while next < positives.len() && positives[next] < item {
            next += 1;
        }
        !(next < positives.len() && positives[next] == item)
    })
}

/// Indices of `scores` ordered by descending score, ascending item id on ties.
pub fn rank_descending<T: Scalar>(pool: &[ItemId], scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(pool[a].cmp(&pool[b]))
    });
    order
}

/// `1/M` on the `M` highest-scored items, ties broken by ascending item id.
///
/// # Panics
/// If `m` is zero or exceeds the pool size.
pub fn dns_probabilities<T: Scalar>(pool: &[ItemId], scores: &[T], m: usize) -> Vec<T> {
    assert!(m >= 1 && m <= scores.len(), "DNS needs 1 <= M <= pool size");
    let mut probs = vec![T::zero(); scores.len()];
    let weight = T::one() / T::of_count(m);
    for &ix in rank_descending(pool, scores).iter().take(m) {
        probs[ix] = weight;
    }
    probs
}

fn softmax<T: Scalar>(logits: impl Iterator<Item = T> + Clone) -> Vec<T> {
    let max = logits.clone().fold(T::neg_infinity(), T::max);
    let weights: Vec<T> = logits.map(|x| (x - max).exp()).collect();
    let total: T = weights.iter().copied().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// `softmax(score / tau)` over the pool.
pub fn fixed_softmax_probabilities<T: Scalar>(scores: &[T], tau: T) -> Vec<T> {
    softmax(scores.iter().map(move |&s| s / tau))
}

/// `sqrt(Var(L) / (2 rho))` with the population variance of the pool
/// losses, floored at [`TAU_FLOOR`].
pub fn adaptive_tau<T: Scalar>(pair_losses: &[T], rho: T) -> T {
    // Welford's update.
    let mut mean = T::zero();
    let mut m2 = T::zero();
    for (k, &x) in pair_losses.iter().enumerate() {
        let delta = x - mean;
        mean += delta / T::of_count(k + 1);
        m2 += delta * (x - mean);
    }
    let var = if pair_losses.is_empty() { T::zero() } else { m2 / T::of_count(pair_losses.len()) };
    let tau = (var / (T::of(2.0) * rho)).sqrt();
    tau.max(T::of(TAU_FLOOR))
}

/// `softmax(L / tau)` with the adaptive temperature.
pub fn softmax_v_probabilities<T: Scalar>(pair_losses: &[T], rho: T) -> Vec<T> {
    let tau = adaptive_tau(pair_losses, rho);
    softmax(pair_losses.iter().map(move |&l| l / tau))
}

/// Probabilities proportional to `count^exponent`; uniform if every count is zero.
pub fn popularity_probabilities<T: Scalar>(pool: &[ItemId], item_counts: &[u64], exponent: f64) -> Vec<T> {
    let weights: Vec<T> = pool
        .iter()
        .map(|&i| {
            let c = item_counts.get(i as usize).copied().unwrap_or(0);
            if c == 0 {
                T::zero()
            } else {
                T::of((c as f64).powf(exponent))
            }
        })
        .collect();
    let total: T = weights.iter().copied().sum();
    if total <= T::zero() {
        return vec![T::one() / T::of_count(pool.len()); pool.len()];
    }
    weights.into_iter().map(|w| w / total).collect()
}

/// Inverse-CDF draw of one pool item.
pub fn sample_negative<T: Scalar, R: Rng + ?Sized>(dist: &PoolDistribution<T>, rng: &mut R) -> ItemId {
    let u = T::of(rng.random::<f64>());
    let mut acc = T::zero();
    let mut last_positive = 0;
    for (ix, &p) in dist.probs.iter().enumerate() {
        if p > T::zero() {
            last_positive = ix;
        }
        acc += p;
        if u < acc {
            return dist.pool[ix];
        }
    }
    // u landed in the rounding gap above the accumulated mass
    dist.pool[last_positive]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;

    fn sums_to_one(p: &[f64]) {
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() <= 1e-12, "sum {s}");
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn dns_examples() {
        let pool = [0, 1, 2, 3];
        assert_eq!(dns_probabilities(&pool, &[0.9, 0.5, 0.1, 0.7], 2), vec![0.5, 0.0, 0.0, 0.5]);
        assert_eq!(dns_probabilities(&pool, &[0.9, 0.5, 0.1, 0.7], 4), vec![0.25; 4]);
        assert_eq!(dns_probabilities(&[0, 1, 2], &[0.5, 0.5, 0.1], 1), vec![1.0, 0.0, 0.0]);
        // tie-break follows item id, not pool position
        assert_eq!(dns_probabilities(&[7, 3, 9], &[0.5, 0.5, 0.1], 1), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn fixed_softmax_examples() {
        let e = std::f64::consts::E;
        let p = fixed_softmax_probabilities(&[1.0, 0.0], 1.0);
        assert_relative_eq!(p[0], e / (1.0 + e), epsilon = 1e-15);
        assert_relative_eq!(p[0], 0.7311, epsilon = 1e-4);
        assert_eq!(fixed_softmax_probabilities(&[2.0; 3], 0.3), vec![1.0 / 3.0; 3]);
        let hot = fixed_softmax_probabilities(&[3.0f64, -1.0, 0.5], 1e9);
        assert!(hot.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-6));
        sums_to_one(&fixed_softmax_probabilities(&[800.0, -800.0, 0.0], 0.01));
    }

    #[test]
    fn adaptive_tau_examples() {
        assert_eq!(adaptive_tau(&[0.0, 2.0], 0.5), 1.0);
        assert_eq!(adaptive_tau(&[0.7; 5], 1.0), TAU_FLOOR);
        let a = adaptive_tau(&[0.1, 0.9, 2.3, 0.4], 1.0);
        let b = adaptive_tau(&[0.1, 0.9, 2.3, 0.4], 4.0);
        assert_relative_eq!(b, a / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn softmax_v_examples() {
        let e2 = std::f64::consts::E.powi(2);
        let p = softmax_v_probabilities(&[0.0, 2.0], 0.5);
        assert_relative_eq!(p[0], 1.0 / (1.0 + e2), epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.8808, epsilon = 1e-4);
        assert_eq!(softmax_v_probabilities(&[0.3; 4], 1.0), vec![0.25; 4]);
        let sharp = softmax_v_probabilities(&[0.2, 0.5, 0.9, 0.45], 100.0);
        assert!(sharp[2] >= 0.99);
    }

    #[test]
    fn popularity_examples() {
        let p: Vec<f64> = popularity_probabilities(&[0, 1], &[16, 1], POPULARITY_EXPONENT);
        assert_relative_eq!(p[0], 8.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(p[1], 1.0 / 9.0, epsilon = 1e-15);
        let eq: Vec<f64> = popularity_probabilities(&[0, 1, 2], &[5, 5, 5], POPULARITY_EXPONENT);
        for x in eq {
            assert_relative_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
        let flat: Vec<f64> = popularity_probabilities(&[0, 1], &[16, 1], 0.0);
        assert_eq!(flat, vec![0.5, 0.5]);
        let zero: Vec<f64> = popularity_probabilities(&[0, 1], &[0, 0], POPULARITY_EXPONENT);
        assert_eq!(zero, vec![0.5, 0.5]);
    }

    #[test]
    fn pool_saturates_and_is_deterministic() {
        let negs = [3, 5, 8];
        let mut r = rng::stream(1, "t", 0);
        assert_eq!(draw_pool(&negs, 5, &mut r), negs.to_vec());
        let big: Vec<ItemId> = (0..100).collect();
        let a = draw_pool(&big, 10, &mut rng::stream(9, "t", 0));
        let b = draw_pool(&big, 10, &mut rng::stream(9, "t", 0));
        assert_eq!(a, b);
        let distinct: HashSet<_> = a.iter().collect();
        assert_eq!(distinct.len(), 10);
    }

    #[test]
    fn single_item_pool_is_fair() {
        let mut r = rng::stream(11, "t", 0);
        let hits = (0..10_000).filter(|_| draw_pool(&[0, 1], 1, &mut r)[0] == 0).count();
        let freq = hits as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&freq), "{freq}");
    }

    #[test]
    fn complement_pool_avoids_positives() {
        let positives = [1, 4, 5, 90];
        let mut r = rng::stream(2, "t", 0);
        for n in [3, 50, 200] {
            let pool = draw_pool_complement(100, &positives, n, &mut r);
            assert_eq!(pool.len(), n.min(96));
            assert!(pool.iter().all(|i| !positives.contains(i) && *i < 100));
            let distinct: HashSet<_> = pool.iter().collect();
            assert_eq!(distinct.len(), pool.len());
        }
    }

    #[test]
    fn inverse_cdf_draws() {
        let mut r = rng::stream(3, "t", 0);
        let degenerate = PoolDistribution { pool: vec![4, 5, 6], probs: vec![1.0, 0.0, 0.0] };
        assert!((0..100).all(|_| sample_negative(&degenerate, &mut r) == 4));
        let uniform = PoolDistribution { pool: vec![0, 1, 2, 3], probs: vec![0.25; 4] };
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[sample_negative(&uniform, &mut r) as usize] += 1;
        }
        for c in counts {
            let f = c as f64 / 40_000.0;
            assert!((0.23..=0.27).contains(&f), "{f}");
        }
        let scores = [0.2, 0.8, 0.5];
        let dns = SamplerSpec::Dns { m: 1, pool: 3 }.distribution(vec![10, 11, 12], &scores, 0.0, None);
        assert!((0..100).all(|_| sample_negative(&dns, &mut r) == 11));
    }

    #[test]
    fn keys_round_trip_and_validation() {
        let keys = SamplerKeys { kind: "dns".into(), m: Some(2), n: Some(50), ..Default::default() };
        let spec = SamplerSpec::try_from(&keys).unwrap();
        assert_eq!(spec, SamplerSpec::Dns { m: 2, pool: 50 });
        assert_eq!(SamplerKeys::from(&spec), keys);
        let bad = SamplerKeys { kind: "dns".into(), m: Some(9), n: Some(5), ..Default::default() };
        assert!(SamplerSpec::try_from(&bad).is_err());
        let missing = SamplerKeys { kind: "softmax_v".into(), n: Some(5), ..Default::default() };
        assert!(SamplerSpec::try_from(&missing).is_err());
        let unknown = SamplerKeys { kind: "irgan".into(), ..Default::default() };
        assert!(SamplerSpec::try_from(&unknown).is_err());
    }

    #[test]
    fn every_kind_yields_a_valid_distribution() {
        let pool: Vec<ItemId> = vec![2, 5, 7, 11, 13];
        let scores = [0.3, -1.2, 2.2, 0.9, 0.0];
        let counts = vec![3u64; 20];
        for spec in [
            SamplerSpec::Uniform { pool: 5 },
            SamplerSpec::Popularity { pool: 5 },
            SamplerSpec::FixedSoftmax { tau: 0.5, pool: 5 },
            SamplerSpec::Dns { m: 2, pool: 5 },
            SamplerSpec::SoftmaxV { rho: 1.0, pool: 5 },
        ] {
            let d = spec.distribution(pool.clone(), &scores, 1.0, Some(&counts));
            d.validate(1e-12).unwrap();
        }
    }
}
