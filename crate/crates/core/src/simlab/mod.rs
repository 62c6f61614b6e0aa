//! Monte Carlo studies over random rankings and sampler distributions, and
//! exhaustive checks of the partial-AUC bounds on small populations.

mod correlation;
mod enumerate;
mod sampling;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::metrics::{LabeledRanking, RankedList};
use crate::rng;
use crate::scalar::Scalar;

pub use correlation::{
    correlation_from_rankings, correlation_study, log_beta_grid, pearson, spearman,
    CorrelationCurve, CorrelationCurves, CorrelationEstimator, CorrelationStudyConfig,
};
pub use enumerate::{
    enumerate_opauc_extrema, opauc_extrema, opauc_max_with_hits, opauc_min_with_hits,
    verify_bounds, BoundViolation, HitExtrema, OpaucExtrema, VerifyBoundsReport,
};
pub use sampling::{
    cdf_dominates, dns1_cdf_oracle, sampling_distribution_study, SamplingCurve,
    SamplingDistributionReport,
};

/// A uniformly random interleaving of the two labels, in rank order.
pub fn sample_labels<R: Rng + ?Sized>(n_plus: usize, n_minus: usize, rng: &mut R) -> Result<Vec<bool>> {
    if n_plus == 0 || n_minus == 0 {
        return Err(invalid("a permutation needs at least one positive and one negative"));
    }
    let mut labels = vec![false; n_plus + n_minus];
    labels[..n_plus].fill(true);
    labels.shuffle(rng);
    Ok(labels)
}

/// Random permutation encoded with integer scores `n - position`, so the
/// first position scores highest.
pub fn sample_permutation<T: Scalar, R: Rng + ?Sized>(
    n_plus: usize,
    n_minus: usize,
    rng: &mut R,
) -> Result<LabeledRanking<T>> {
    let labels = sample_labels(n_plus, n_minus, rng)?;
    let n = labels.len();
    let items = labels
        .into_iter()
        .enumerate()
        .map(|(pos, positive)| crate::metrics::ScoredItem {
            id: pos as u32,
            score: T::of_count(n - pos),
            positive,
        })
        .collect();
    LabeledRanking::from_items(items)
}

pub(crate) fn sample_ranked<R: Rng + ?Sized>(n_plus: usize, n_minus: usize, rng: &mut R) -> Result<RankedList> {
    RankedList::from_sorted_labels(sample_labels(n_plus, n_minus, rng)?)
}

/// `n` standard-normal scores from stream `"synthetic-scores"` under `seed`.
pub fn synthetic_scores(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, "synthetic-scores", 0);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}
