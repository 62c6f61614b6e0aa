use serde::{Deserialize, Serialize};

use crate::dataset::ItemId;
use crate::error::{invalid, Result};
use crate::rng::{self, TRIAL_STREAM};
use crate::sampler::{draw_pool, rank_descending, SamplerSpec};
use crate::scalar::Scalar;

/// Mean sampling probability per negative, negatives ordered by descending
/// score, and its running sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingCurve {
    pub sampler: SamplerSpec,
    pub label: String,
    pub probability: Vec<f64>,
    pub cumulative: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistributionReport {
    pub n_negatives: usize,
    pub draws: usize,
    pub seed: u64,
    pub curves: Vec<SamplingCurve>,
}

impl SamplingDistributionReport {
    pub fn curve(&self, sampler: &SamplerSpec) -> Option<&SamplingCurve> {
        self.curves.iter().find(|c| &c.sampler == sampler)
    }

    /// Columns `sampler,rank,probability,cumulative` with 1-based ranks.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["sampler", "rank", "probability", "cumulative"])?;
        for c in &self.curves {
            for (r, (p, cdf)) in c.probability.iter().zip(&c.cumulative).enumerate() {
                w.write_record([c.label.as_str(), &(r + 1).to_string(), &p.to_string(), &cdf.to_string()])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Estimates, for each sampler, the average probability `p_cij` that each
/// negative receives over `draws` independent pool draws, with the scores
/// held fixed.
///
/// `negative_scores[j]` belongs to negative item `j`; `item_counts`, if
/// given, is indexed the same way and feeds the popularity sampler.
pub fn sampling_distribution_study<T: Scalar>(
    negative_scores: &[T],
    positive_score: T,
    samplers: &[SamplerSpec],
    draws: usize,
    seed: u64,
    item_counts: Option<&[u64]>,
) -> Result<SamplingDistributionReport> {
    let n = negative_scores.len();
    if n == 0 || draws == 0 {
        return Err(invalid("need at least one negative and one draw"));
    }
    if negative_scores.iter().any(|s| !s.is_finite()) || !positive_score.is_finite() {
        return Err(invalid("scores must be finite"));
    }
    if item_counts.is_some_and(|c| c.len() != n) {
        return Err(invalid("item_counts must align with negative_scores"));
    }
    let ids: Vec<ItemId> = (0..n as ItemId).collect();
    // Work in rank space: id r is the r-th highest-scored negative.
    let order = rank_descending(&ids, negative_scores);
    let ranked_scores: Vec<T> = order.iter().map(|&j| negative_scores[j]).collect();
    let ranked_counts: Option<Vec<u64>> = item_counts.map(|c| order.iter().map(|&j| c[j]).collect());
    let ranks = ids;

    let mut curves = Vec::with_capacity(samplers.len());
    for (s_ix, spec) in samplers.iter().enumerate() {
        spec.validate()?;
        let mut rng = rng::stream(seed, TRIAL_STREAM, s_ix as u64);
        let mut mass = vec![0.0f64; n];
        let mut pool_scores = Vec::new();
        for _ in 0..draws {
            let pool = draw_pool(&ranks, spec.pool_size(), &mut rng);
            pool_scores.clear();
            pool_scores.extend(pool.iter().map(|&r| ranked_scores[r as usize]));
            let dist = spec.distribution(pool, &pool_scores, positive_score, ranked_counts.as_deref());
            for (r, p) in dist.iter() {
                mass[r as usize] += p.as_f64();
            }
        }
        let probability: Vec<f64> = mass.iter().map(|m| m / draws as f64).collect();
        let cumulative = probability
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        curves.push(SamplingCurve { sampler: *spec, label: spec.label(), probability, cumulative });
    }
    Ok(SamplingDistributionReport { n_negatives: n, draws, seed, curves })
}

/// Probability that the best of a uniform `pool`-subset of `n` ranked
/// negatives lies in the top `r`: `1 - C(n - r, pool) / C(n, pool)`.
pub fn dns1_cdf_oracle(n: usize, pool: usize, r: usize) -> f64 {
    let pool = pool.min(n);
    if r >= n || r + pool > n {
        return 1.0;
    }
    let miss: f64 = (0..pool).map(|k| (n - r - k) as f64 / (n - k) as f64).product();
    1.0 - miss
}

/// `harder[r] >= easier[r] - tol` for every rank `r < top`.
pub fn cdf_dominates(harder: &[f64], easier: &[f64], top: usize, tol: f64) -> bool {
    harder.iter().zip(easier).take(top).all(|(h, e)| *h >= *e - tol)
}
