use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metrics::{precision_bounds, recall_bounds, RankedList};

/// Every placement of `n_plus` positives among `n_plus + n_minus` ranks.
fn placements(n_plus: usize, n_minus: usize) -> impl Iterator<Item = RankedList> {
    let n = n_plus + n_minus;
    assert!(n < 26, "too many ranks to enumerate");
    (0u32..1 << n)
        .filter(move |mask| mask.count_ones() as usize == n_plus)
        .map(move |mask| {
            let labels = (0..n).map(|p| mask >> p & 1 == 1).collect();
            RankedList::from_sorted_labels(labels).expect("both labels present")
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub n_plus: usize,
    pub n_minus: usize,
    pub k: usize,
    pub labels: Vec<bool>,
    pub recall: f64,
    pub recall_bounds: (f64, f64),
    pub precision: f64,
    pub precision_bounds: (f64, f64),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyBoundsReport {
    /// `(N+, N-, K)` combinations visited.
    pub cases: usize,
    /// Rankings checked, summed over cases.
    pub checks: usize,
    pub violations: usize,
    /// The first few violations, for diagnosis.
    pub examples: Vec<BoundViolation>,
}

/// Checks the Recall@K and Precision@K brackets derived from the partial AUC
/// at `beta = K / N-` on every ranking with `N+ <= max_n_plus`,
/// `N- <= max_n_minus` and `K < min(N+, N-)`.
pub fn verify_bounds(max_n_plus: usize, max_n_minus: usize) -> Result<VerifyBoundsReport> {
    if max_n_plus + max_n_minus > 20 {
        return Err(invalid("populations too large to enumerate"));
    }
    let mut report = VerifyBoundsReport::default();
    for n_plus in 1..=max_n_plus {
        for n_minus in 1..=max_n_minus {
            let ks = 1..n_plus.min(n_minus);
            if ks.is_empty() {
                continue;
            }
            let rankings: Vec<RankedList> = placements(n_plus, n_minus).collect();
            for k in ks {
                report.cases += 1;
                let beta = k as f64 / n_minus as f64;
                for r in &rankings {
                    report.checks += 1;
                    let a = r.opauc::<f64>(beta).value;
                    let rb = recall_bounds(n_plus, n_minus, k, a)?;
                    let pb = precision_bounds(n_plus, n_minus, k, a)?;
                    let recall = r.recall_at_k::<f64>(k);
                    let precision = r.precision_at_k::<f64>(k);
                    let ok = rb.lower <= recall
                        && recall <= rb.upper
                        && pb.lower <= precision
                        && precision <= pb.upper;
                    if !ok {
                        report.violations += 1;
                        if report.examples.len() < 10 {
                            report.examples.push(BoundViolation {
                                n_plus,
                                n_minus,
                                k,
                                labels: r.labels().to_vec(),
                                recall,
                                recall_bounds: (rb.lower, rb.upper),
                                precision,
                                precision_bounds: (pb.lower, pb.upper),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(report)
}

/// Largest partial AUC over the top `k` negatives when exactly `i`
/// positives sit in the top `k` ranks: `i (N+ + K - i) / (N+ N-)`.
pub fn opauc_max_with_hits(n_plus: usize, n_minus: usize, k: usize, i: usize) -> f64 {
    (i * (n_plus + k - i)) as f64 / (n_plus as f64 * n_minus as f64)
}

/// Smallest such value: `i^2 / (N+ N-)`.
pub fn opauc_min_with_hits(n_plus: usize, n_minus: usize, _k: usize, i: usize) -> f64 {
    (i * i) as f64 / (n_plus as f64 * n_minus as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpaucExtrema {
    pub min: f64,
    pub max: f64,
    /// Hit count in the top `k` attaining `max`.
    pub argmax_hits: usize,
}

/// Global extrema of the partial AUC at `beta = K / N-` over hit counts
/// `0..=min(K, N+)`.
pub fn opauc_extrema(n_plus: usize, n_minus: usize, k: usize) -> Result<OpaucExtrema> {
    if n_plus == 0 || n_minus == 0 || k == 0 || k > n_minus {
        return Err(invalid(format!("need N+, N- >= 1 and 1 <= K <= N-, got ({n_plus}, {n_minus}, {k})")));
    }
    let top = k.min(n_plus);
    let (mut best, mut argmax) = (f64::NEG_INFINITY, 0);
    let mut min = f64::INFINITY;
    for i in 0..=top {
        let hi = opauc_max_with_hits(n_plus, n_minus, k, i);
        if hi > best {
            best = hi;
            argmax = i;
        }
        min = min.min(opauc_min_with_hits(n_plus, n_minus, k, i));
    }
    Ok(OpaucExtrema { min, max: best, argmax_hits: argmax })
}

/// Observed partial-AUC range among rankings with a given hit count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitExtrema {
    pub hits: usize,
    pub min: f64,
    pub max: f64,
}

/// Enumerates every ranking and groups the partial AUC over the top `k`
/// negatives by the number of positives in the top `k` ranks.
pub fn enumerate_opauc_extrema(n_plus: usize, n_minus: usize, k: usize) -> Result<Vec<HitExtrema>> {
    if n_plus == 0 || n_minus == 0 || k == 0 || k > n_minus {
        return Err(invalid(format!("need N+, N- >= 1 and 1 <= K <= N-, got ({n_plus}, {n_minus}, {k})")));
    }
    if n_plus + n_minus > 20 {
        return Err(invalid("populations too large to enumerate"));
    }
    let mut by_hits: Vec<Option<HitExtrema>> = vec![None; k.min(n_plus) + 1];
    for r in placements(n_plus, n_minus) {
        let hits = r.hits_at(k);
        let a = r.opauc_top::<f64>(k);
        let slot = &mut by_hits[hits];
        *slot = Some(match *slot {
            None => HitExtrema { hits, min: a, max: a },
            Some(e) => HitExtrema { hits, min: e.min.min(a), max: e.max.max(a) },
        });
    }
    Ok(by_hits.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_extrema() {
        assert_eq!(opauc_max_with_hits(2, 3, 2, 2), 4.0 / 6.0);
        assert_eq!(opauc_max_with_hits(2, 3, 2, 0), 0.0);
        assert_eq!(opauc_min_with_hits(2, 3, 2, 0), 0.0);
        let e = opauc_extrema(2, 3, 2).unwrap();
        assert_eq!((e.min, e.max, e.argmax_hits), (0.0, 4.0 / 6.0, 2));
        assert!(opauc_extrema(2, 3, 4).is_err());
    }

    #[test]
    fn tiny_populations_are_vacuous() {
        let r = verify_bounds(1, 1).unwrap();
        assert_eq!((r.cases, r.checks, r.violations), (0, 0, 0));
    }

    #[test]
    fn hand_case_has_no_violation() {
        let r = verify_bounds(2, 3).unwrap();
        // (2,2,K=1) and (2,3,K=1): 6 + 10 rankings
        assert_eq!(r.cases, 2);
        assert_eq!(r.checks, 16);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn placement_count_is_binomial() {
        assert_eq!(placements(3, 4).count(), 35);
    }
}
