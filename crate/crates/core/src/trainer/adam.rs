use serde::{Deserialize, Serialize};

use super::{MfModel, SparseGrad};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay: touched rows are scaled by `1 - lr * weight_decay`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Moment buffers shaped like the two embedding tables, plus the step count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AdamState<T: Scalar> {
    pub step: u64,
    pub m_contexts: Vec<T>,
    pub v_contexts: Vec<T>,
    pub m_items: Vec<T>,
    pub v_items: Vec<T>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(model: &MfModel<T>) -> Self {
        let nc = model.context_table().len();
        let ni = model.item_table().len();
        Self {
            step: 0,
            m_contexts: vec![T::zero(); nc],
            v_contexts: vec![T::zero(); nc],
            m_items: vec![T::zero(); ni],
            v_items: vec![T::zero(); ni],
        }
    }

    pub fn matches(&self, model: &MfModel<T>) -> bool {
        self.m_contexts.len() == model.context_table().len()
            && self.v_contexts.len() == model.context_table().len()
            && self.m_items.len() == model.item_table().len()
            && self.v_items.len() == model.item_table().len()
    }
}

struct Coefs<T> {
    lr: T,
    b1: T,
    b2: T,
    eps: T,
    decay: T,
    bc1: T,
    bc2: T,
}

fn update_rows<T: Scalar>(
    table: &mut [T],
    m: &mut [T],
    v: &mut [T],
    rows: &std::collections::BTreeMap<u32, Vec<T>>,
    dim: usize,
    k: &Coefs<T>,
) {
    for (&row, g) in rows {
        let base = row as usize * dim;
        for (off, &gk) in g.iter().enumerate() {
            let ix = base + off;
            m[ix] = k.b1 * m[ix] + (T::one() - k.b1) * gk;
            v[ix] = k.b2 * v[ix] + (T::one() - k.b2) * gk * gk;
            let m_hat = m[ix] / k.bc1;
            let v_hat = v[ix] / k.bc2;
            table[ix] = table[ix] * k.decay - k.lr * m_hat / (v_hat.sqrt() + k.eps);
        }
    }
}

/// One bias-corrected Adam step on the rows present in `grad`.
///
/// Fails without touching the model if any gradient entry is non-finite.
pub fn adam_step<T: Scalar>(
    model: &mut MfModel<T>,
    grad: &SparseGrad<T>,
    cfg: &AdamConfig,
    state: &mut AdamState<T>,
) -> Result<()> {
    for (&row, g) in &grad.contexts {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { table: "contexts", row: row as usize });
        }
    }
    for (&row, g) in &grad.items {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient { table: "items", row: row as usize });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let lr = T::of(cfg.learning_rate);
    let k = Coefs {
        lr,
        b1,
        b2,
        eps: T::of(cfg.eps),
        decay: T::one() - lr * T::of(cfg.weight_decay),
        bc1: T::one() - b1.powi(t),
        bc2: T::one() - b2.powi(t),
    };
    let dim = model.dim();
    let (contexts, items) = model.tables_mut();
    update_rows(contexts, &mut state.m_contexts, &mut state.v_contexts, &grad.contexts, dim, &k);
    update_rows(items, &mut state.m_items, &mut state.v_items, &grad.items, dim, &k);
    Ok(())
}
