use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ContextId, ItemId};
use crate::error::{invalid, Result};
use crate::metrics::Scorer;
use crate::scalar::Scalar;

/// Context and item embedding tables, row-major; `r_ci` is a dot product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MfModel<T: Scalar> {
    num_contexts: usize,
    num_items: usize,
    dim: usize,
    contexts: Vec<T>,
    items: Vec<T>,
}

impl<T: Scalar> MfModel<T> {
    pub fn zeros(num_contexts: usize, num_items: usize, dim: usize) -> Self {
        Self {
            num_contexts,
            num_items,
            dim,
            contexts: vec![T::zero(); num_contexts * dim],
            items: vec![T::zero(); num_items * dim],
        }
    }

    /// Entries drawn uniformly from `(-1/sqrt(d), 1/sqrt(d))`.
    pub fn init_uniform<R: Rng + ?Sized>(num_contexts: usize, num_items: usize, dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let mut draw = |n: usize| -> Vec<T> {
            (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect()
        };
        let contexts = draw(num_contexts * dim);
        let items = draw(num_items * dim);
        Self { num_contexts, num_items, dim, contexts, items }
    }

    pub fn from_parts(
        num_contexts: usize,
        num_items: usize,
        dim: usize,
        contexts: Vec<T>,
        items: Vec<T>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("embedding dimension must be >= 1"));
        }
        if contexts.len() != num_contexts * dim || items.len() != num_items * dim {
            return Err(invalid("embedding table sizes do not match the declared shape"));
        }
        if contexts.iter().chain(&items).any(|x| !x.is_finite()) {
            return Err(invalid("non-finite embedding entry"));
        }
        Ok(Self { num_contexts, num_items, dim, contexts, items })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn context_table(&self) -> &[T] {
        &self.contexts
    }

    pub fn item_table(&self) -> &[T] {
        &self.items
    }

    pub(crate) fn tables_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.contexts, &mut self.items)
    }

    pub fn context_row(&self, c: ContextId) -> &[T] {
        let d = self.dim;
        &self.contexts[c as usize * d..(c as usize + 1) * d]
    }

    pub fn item_row(&self, i: ItemId) -> &[T] {
        let d = self.dim;
        &self.items[i as usize * d..(i as usize + 1) * d]
    }

    pub fn context_row_mut(&mut self, c: ContextId) -> &mut [T] {
        let d = self.dim;
        &mut self.contexts[c as usize * d..(c as usize + 1) * d]
    }

    pub fn item_row_mut(&mut self, i: ItemId) -> &mut [T] {
        let d = self.dim;
        &mut self.items[i as usize * d..(i as usize + 1) * d]
    }

    #[inline]
    pub fn score(&self, c: ContextId, i: ItemId) -> T {
        dot(self.context_row(c), self.item_row(i))
    }

    pub fn all_finite(&self) -> bool {
        self.contexts.iter().chain(&self.items).all(|x| x.is_finite())
    }

    /// Frobenius norms of the two tables.
    pub fn norms(&self) -> (T, T) {
        let norm = |v: &[T]| v.iter().map(|&x| x * x).sum::<T>().sqrt();
        (norm(&self.contexts), norm(&self.items))
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

impl<T: Scalar> Scorer<T> for MfModel<T> {
    fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    fn num_items(&self) -> usize {
        self.num_items
    }

    fn score_all(&self, c: ContextId, out: &mut Vec<T>) {
        let ctx = self.context_row(c);
        out.clear();
        out.extend(self.items.chunks_exact(self.dim).map(|row| dot(ctx, row)));
    }
}
