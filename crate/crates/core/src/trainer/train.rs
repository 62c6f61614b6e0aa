use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{adam_step, batch_gradient, plan_batch, weighted_loss, AdamConfig, AdamState, MfModel};
use crate::dataset::{ContextId, InteractionSet, ItemId};
use crate::error::{invalid, Error, Result};
use crate::metrics::{evaluate_model, RankedEvaluation};
use crate::rng::{self, INIT_STREAM, POOL_STREAM, SHUFFLE_STREAM};
use crate::sampler::SamplerSpec;
use crate::scalar::Scalar;

const PROBE_STREAM: &str = "loss-probe";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub sampler: SamplerSpec,
    pub seed: u64,
    /// Train on one negative drawn from `p` instead of the exact expectation.
    pub single_draw: bool,
    /// Validation snapshot every this many epochs; 0 disables.
    pub eval_every: usize,
    pub eval_ks: Vec<usize>,
    pub eval_betas: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            epochs: 200,
            batch_size: 4096,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            sampler: SamplerSpec::Dns { m: 5, pool: 200 },
            seed: 0,
            single_draw: false,
            eval_every: 0,
            eval_ks: vec![5, 20, 50],
            eval_betas: vec![],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("dim, epochs and batch_size must all be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(invalid("weight_decay must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(invalid("adam betas must lie in [0, 1)"));
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return Err(invalid("adam_eps must be positive"));
        }
        self.sampler.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// Completed passes, starting at 1.
    pub epoch: usize,
    /// Pair-weighted mean of the batch losses, each taken before its update.
    pub mean_loss: f64,
    pub seconds: f64,
    pub skipped_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub epoch: usize,
    pub eval: RankedEvaluation,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Sampled loss over all training pairs at initialization.
    pub initial_loss: f64,
    pub epochs: Vec<EpochLog>,
    pub evaluations: Vec<EvalSnapshot>,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }
}

#[derive(Debug, Clone)]
pub struct Trained<T: Scalar> {
    pub model: MfModel<T>,
    pub optimizer: AdamState<T>,
    pub log: TrainLog,
}

/// Runs `cfg.epochs` shuffled passes over the training pairs.
///
/// Everything random comes from streams under `cfg.seed`: initialization,
/// the per-epoch shuffle, and one pool stream per optimizer step. Results
/// are therefore reproducible bit for bit.
pub fn train<T: Scalar>(
    train: &InteractionSet,
    valid: Option<&InteractionSet>,
    cfg: &TrainConfig,
) -> Result<Trained<T>> {
    cfg.validate()?;
    if train.num_interactions() == 0 {
        return Err(invalid("training set has no interactions"));
    }
    let mut model = MfModel::<T>::init_uniform(
        train.num_contexts(),
        train.num_items(),
        cfg.dim,
        &mut rng::stream(cfg.seed, INIT_STREAM, 0),
    );
    let mut optimizer = AdamState::new(&model);
    let counts = train.item_counts();
    let counts = Some(counts.as_slice());
    let adam = cfg.adam();
    let mut pairs: Vec<(ContextId, ItemId)> = train.pairs().collect();

    let (probe, _) = plan_batch(
        &model,
        train,
        &pairs,
        &cfg.sampler,
        counts,
        cfg.single_draw,
        &mut rng::stream(cfg.seed, PROBE_STREAM, 0),
    );
    let initial_loss = weighted_loss(&model, &probe).as_f64();
    if !initial_loss.is_finite() {
        return Err(Error::Diverged { epoch: 0, loss: initial_loss });
    }
    let mut log = TrainLog { initial_loss, ..TrainLog::default() };

    // Epochs are numbered from 1; 0 stands for the state at initialization.
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        pairs.shuffle(&mut rng::stream(cfg.seed, SHUFFLE_STREAM, epoch as u64 - 1));
        let mut loss_sum = 0.0;
        let mut loss_pairs = 0usize;
        let mut skipped = 0usize;
        for batch in pairs.chunks(cfg.batch_size) {
            let mut pool_rng = rng::stream(cfg.seed, POOL_STREAM, optimizer.step);
            let out = batch_gradient(&model, train, batch, &cfg.sampler, counts, cfg.single_draw, &mut pool_rng)?;
            let loss = out.loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            skipped += out.stats.skipped;
            loss_sum += loss * out.pairs as f64;
            loss_pairs += out.pairs;
            adam_step(&mut model, &out.grad, &adam, &mut optimizer)?;
        }
        if !model.all_finite() {
            return Err(Error::Diverged { epoch, loss: f64::NAN });
        }
        let mean_loss = if loss_pairs > 0 { loss_sum / loss_pairs as f64 } else { 0.0 };
        log::debug!("epoch {epoch}: loss {mean_loss:.6}");
        log.epochs.push(EpochLog {
            epoch,
            mean_loss,
            seconds: start.elapsed().as_secs_f64(),
            skipped_pairs: skipped,
        });

        let due = cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
        if let (true, Some(valid)) = (due, valid) {
            match evaluate_model(&model, train, valid, &cfg.eval_ks, &cfg.eval_betas) {
                Ok(eval) => log.evaluations.push(EvalSnapshot { epoch, eval }),
                Err(e) => log::warn!("validation snapshot at epoch {epoch} skipped: {e}"),
            }
        }
    }
    Ok(Trained { model, optimizer, log })
}
