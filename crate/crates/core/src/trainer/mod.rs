//! Matrix-factorization scorer trained with sampled pairwise ranking loss.
//!
//! One step: for each `(c, i)` in a mini-batch, draw a candidate pool of
//! negatives, put a sampler distribution `p_cij` on it, and accumulate
//! `sum_j p_cij * grad L(c, i, j)`; the batch mean then goes through sparse
//! Adam with decoupled weight decay. `p_cij` is held constant while
//! differentiating.

mod adam;
mod checkpoint;
mod gradient;
mod loss;
mod model;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use gradient::{
    batch_gradient, plan_batch, plan_gradient, weighted_loss, BatchGradient, PairPlan, PlanStats,
    SparseGrad,
};
pub use loss::{pair_loss, surrogate_loss, surrogate_loss_derivative};
pub use model::MfModel;
pub use train::{train, EpochLog, EvalSnapshot, TrainConfig, TrainLog, Trained};
