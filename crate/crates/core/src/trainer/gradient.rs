use std::collections::BTreeMap;

use rand::Rng;

use super::loss::{surrogate_loss, surrogate_loss_derivative};
use super::MfModel;
use crate::dataset::{ContextId, InteractionSet, ItemId};
use crate::error::{invalid, Result};
use crate::sampler::{draw_pool_complement, sample_negative, PoolDistribution, SamplerSpec};
use crate::scalar::Scalar;

/// A positive pair with its frozen distribution over sampled negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPlan<T> {
    pub c: ContextId,
    pub i: ItemId,
    pub dist: PoolDistribution<T>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlanStats {
    /// Pairs dropped because their context has no negatives.
    pub skipped: usize,
}

/// Draws pools and sampler distributions for every pair of `batch`.
///
/// With `single_draw`, each distribution is replaced by a one-hot on one
/// negative drawn from it.
#[allow(clippy::too_many_arguments)]
pub fn plan_batch<T: Scalar, R: Rng + ?Sized>(
    model: &MfModel<T>,
    train: &InteractionSet,
    batch: &[(ContextId, ItemId)],
    spec: &SamplerSpec,
    item_counts: Option<&[u64]>,
    single_draw: bool,
    rng: &mut R,
) -> (Vec<PairPlan<T>>, PlanStats) {
    let mut stats = PlanStats::default();
    let mut plans = Vec::with_capacity(batch.len());
    let mut scores = Vec::new();
    for &(c, i) in batch {
        let positives = train.positives(c);
        if positives.len() >= train.num_items() {
            stats.skipped += 1;
            continue;
        }
        let pool = draw_pool_complement(train.num_items(), positives, spec.pool_size(), rng);
        scores.clear();
        if spec.needs_scores() {
            scores.extend(pool.iter().map(|&j| model.score(c, j)));
        }
        let positive_score = model.score(c, i);
        let mut dist = spec.distribution(pool, &scores, positive_score, item_counts);
        if single_draw {
            dist = PoolDistribution::one_hot(sample_negative(&dist, rng));
        }
        plans.push(PairPlan { c, i, dist });
    }
    if stats.skipped > 0 {
        log::warn!("{} pairs skipped: context has no negative items", stats.skipped);
    }
    (plans, stats)
}

/// `(1/|B|) sum_(c,i) sum_j p_cij L(c,i,j)` with the plans' probabilities.
pub fn weighted_loss<T: Scalar>(model: &MfModel<T>, plans: &[PairPlan<T>]) -> T {
    if plans.is_empty() {
        return T::zero();
    }
    let total: T = plans
        .iter()
        .map(|plan| {
            let pos = model.score(plan.c, plan.i);
            plan.dist
                .iter()
                .filter(|&(_, p)| p > T::zero())
                .map(|(j, p)| p * surrogate_loss(pos - model.score(plan.c, j)))
                .sum::<T>()
        })
        .sum();
    total / T::of_count(plans.len())
}

/// Gradient rows keyed by embedding index.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGrad<T> {
    pub dim: usize,
    pub contexts: BTreeMap<ContextId, Vec<T>>,
    pub items: BTreeMap<ItemId, Vec<T>>,
}

impl<T: Scalar> SparseGrad<T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, contexts: BTreeMap::new(), items: BTreeMap::new() }
    }

    pub fn context_mut(&mut self, c: ContextId) -> &mut Vec<T> {
        let d = self.dim;
        self.contexts.entry(c).or_insert_with(|| vec![T::zero(); d])
    }

    pub fn item_mut(&mut self, i: ItemId) -> &mut Vec<T> {
        let d = self.dim;
        self.items.entry(i).or_insert_with(|| vec![T::zero(); d])
    }

    pub fn context(&self, c: ContextId) -> Option<&[T]> {
        self.contexts.get(&c).map(Vec::as_slice)
    }

    pub fn item(&self, i: ItemId) -> Option<&[T]> {
        self.items.get(&i).map(Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty() && self.items.is_empty()
    }
}

/// Analytic gradient of [`weighted_loss`] with the probabilities held fixed.
pub fn plan_gradient<T: Scalar>(model: &MfModel<T>, plans: &[PairPlan<T>]) -> SparseGrad<T> {
    let d = model.dim();
    let mut grad = SparseGrad::new(d);
    if plans.is_empty() {
        return grad;
    }
    let scale = T::one() / T::of_count(plans.len());
    let mut g_ctx = vec![T::zero(); d];
    let mut g_pos = vec![T::zero(); d];
    for plan in plans {
        let e_c = model.context_row(plan.c);
        let e_i = model.item_row(plan.i);
        let pos = model.score(plan.c, plan.i);
        g_ctx.iter_mut().for_each(|x| *x = T::zero());
        g_pos.iter_mut().for_each(|x| *x = T::zero());
        for (j, p) in plan.dist.iter() {
            if p <= T::zero() {
                continue;
            }
            let e_j = model.item_row(j);
            let w = scale * p * surrogate_loss_derivative(pos - super::model::dot(e_c, e_j));
            // dL/de_c = l'(t)(e_i - e_j), dL/de_i = l'(t) e_c, dL/de_j = -l'(t) e_c
            for k in 0..d {
                g_ctx[k] += w * (e_i[k] - e_j[k]);
                g_pos[k] += w * e_c[k];
            }
            let row = grad.item_mut(j);
            for k in 0..d {
                row[k] -= w * e_c[k];
            }
        }
        for (acc, g) in grad.context_mut(plan.c).iter_mut().zip(&g_ctx) {
            *acc += *g;
        }
        for (acc, g) in grad.item_mut(plan.i).iter_mut().zip(&g_pos) {
            *acc += *g;
        }
    }
    grad
}

#[derive(Debug, Clone)]
pub struct BatchGradient<T> {
    pub grad: SparseGrad<T>,
    /// Probability-weighted mean pair loss before the update.
    pub loss: T,
    pub stats: PlanStats,
    pub pairs: usize,
}

/// Plans the batch and returns the weighted loss and its gradient.
#[allow(clippy::too_many_arguments)]
pub fn batch_gradient<T: Scalar, R: Rng + ?Sized>(
    model: &MfModel<T>,
    train: &InteractionSet,
    batch: &[(ContextId, ItemId)],
    spec: &SamplerSpec,
    item_counts: Option<&[u64]>,
    single_draw: bool,
    rng: &mut R,
) -> Result<BatchGradient<T>> {
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    let (plans, stats) = plan_batch(model, train, batch, spec, item_counts, single_draw, rng);
    Ok(BatchGradient {
        loss: weighted_loss(model, &plans),
        grad: plan_gradient(model, &plans),
        stats,
        pairs: plans.len(),
    })
}
