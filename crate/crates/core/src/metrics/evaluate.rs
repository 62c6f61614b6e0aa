use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LabeledRanking, RankedList, ScoredItem};
use crate::dataset::{ContextId, InteractionSet};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Anything that scores every item for a context.
pub trait Scorer<T: Scalar>: Sync {
    fn num_contexts(&self) -> usize;
    fn num_items(&self) -> usize;
    /// Overwrites `out` with the scores of items `0..num_items` for `c`.
    fn score_all(&self, c: ContextId, out: &mut Vec<T>);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Recall,
    Precision,
    Ndcg,
    Auc,
    Opauc,
    OpaucNorm,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Recall => "recall",
            Metric::Precision => "precision",
            Metric::Ndcg => "ndcg",
            Metric::Auc => "auc",
            Metric::Opauc => "opauc",
            Metric::OpaucNorm => "opauc_norm",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    K(usize),
    Beta(f64),
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::K(k) => write!(f, "{k}"),
            Param::Beta(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: Metric,
    pub param: Option<Param>,
    pub value: f64,
}

/// Macro-averaged metrics over contexts with at least one held-out positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEvaluation {
    pub rows: Vec<MetricRow>,
    pub contexts_evaluated: usize,
    pub contexts_skipped: usize,
}

impl RankedEvaluation {
    pub fn get(&self, metric: Metric, param: Option<Param>) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.param == param)
            .map(|r| r.value)
    }

    pub fn at_k(&self, metric: Metric, k: usize) -> Option<f64> {
        self.get(metric, Some(Param::K(k)))
    }

    /// `metric,param,value` rows; `param` is empty for AUC.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "param", "value"])?;
        for r in &self.rows {
            let param = r.param.map(|p| p.to_string()).unwrap_or_default();
            w.write_record([r.metric.name(), param.as_str(), &r.value.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn row_layout(ks: &[usize], betas: &[f64]) -> Vec<(Metric, Option<Param>)> {
    let mut layout = Vec::new();
    for metric in [Metric::Recall, Metric::Precision, Metric::Ndcg] {
        layout.extend(ks.iter().map(|&k| (metric, Some(Param::K(k)))));
    }
    layout.push((Metric::Auc, None));
    for metric in [Metric::Opauc, Metric::OpaucNorm] {
        layout.extend(betas.iter().map(|&b| (metric, Some(Param::Beta(b)))));
    }
    layout
}

fn context_values<T: Scalar>(
    ranked: &RankedList,
    layout: &[(Metric, Option<Param>)],
) -> Vec<T> {
    layout
        .iter()
        .map(|&(metric, param)| match (metric, param) {
            (Metric::Recall, Some(Param::K(k))) => ranked.recall_at_k(k),
            (Metric::Precision, Some(Param::K(k))) => ranked.precision_at_k(k),
            (Metric::Ndcg, Some(Param::K(k))) => ranked.ndcg_at_k(k),
            (Metric::Auc, None) => ranked.auc(),
            (Metric::Opauc, Some(Param::Beta(b))) => ranked.opauc::<T>(b).value,
            (Metric::OpaucNorm, Some(Param::Beta(b))) => ranked.opauc_normalized(b),
            _ => unreachable!("row layout pairs metrics with their parameter kind"),
        })
        .collect()
}

/// Scores every item per context, drops `train` positives from the
/// candidates, labels `test` positives, and averages the requested metrics
/// uniformly over contexts that have at least one test positive and one
/// remaining negative.
pub fn evaluate_model<T: Scalar, S: Scorer<T>>(
    model: &S,
    train: &InteractionSet,
    test: &InteractionSet,
    ks: &[usize],
    betas: &[f64],
) -> Result<RankedEvaluation> {
    if ks.contains(&0) {
        return Err(invalid("K values must be >= 1"));
    }
    if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
        return Err(invalid(format!("beta {b} not in (0, 1]")));
    }
    if model.num_items() != test.num_items() || model.num_items() != train.num_items() {
        return Err(invalid(format!(
            "model scores {} items, data has {}",
            model.num_items(),
            test.num_items()
        )));
    }
    if model.num_contexts() < test.num_contexts() {
        return Err(invalid("model has fewer contexts than the test set"));
    }
    let layout = row_layout(ks, betas);

    let per_context: Vec<Option<Vec<T>>> = (0..test.num_contexts() as ContextId)
        .into_par_iter()
        .map_init(Vec::new, |scores, c| {
            if test.positives(c).is_empty() {
                return None;
            }
            model.score_all(c, scores);
            let items: Vec<ScoredItem<T>> = scores
                .iter()
                .enumerate()
                .map(|(i, &score)| (i as u32, score))
                .filter(|&(i, _)| !train.is_positive(c, i))
                .map(|(id, score)| ScoredItem { id, score, positive: test.is_positive(c, id) })
                .collect();
            let ranking = LabeledRanking::from_items(items).ok()?;
            Some(context_values(&ranking.ranked(), &layout))
        })
        .collect();

    let mut sums = vec![T::zero(); layout.len()];
    let mut evaluated = 0usize;
    for values in per_context.iter().flatten() {
        evaluated += 1;
        for (s, v) in sums.iter_mut().zip(values) {
            *s += *v;
        }
    }
    let skipped = per_context.len() - evaluated;
    if evaluated == 0 {
        return Err(invalid("no context has a held-out positive to evaluate"));
    }
    let n = T::of_count(evaluated);
    let rows = layout
        .into_iter()
        .zip(sums)
        .map(|((metric, param), s)| MetricRow { metric, param, value: (s / n).as_f64() })
        .collect();
    Ok(RankedEvaluation { rows, contexts_evaluated: evaluated, contexts_skipped: skipped })
}
