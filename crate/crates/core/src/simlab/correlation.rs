use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sample_ranked;
use crate::error::{invalid, Error, Result};
use crate::metrics::{top_negative_count, Metric, RankedList};
use crate::rng::{self, TRIAL_STREAM};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationEstimator {
    #[default]
    Pearson,
    Spearman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationStudyConfig {
    pub n_plus: usize,
    pub n_minus: usize,
    pub trials: usize,
    /// Ascending, ending at 1.0.
    pub betas: Vec<f64>,
    pub ks: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub estimator: CorrelationEstimator,
}

impl Default for CorrelationStudyConfig {
    fn default() -> Self {
        Self {
            n_plus: 200,
            n_minus: 800,
            trials: 100_000,
            betas: log_beta_grid(800, 40),
            ks: vec![5, 20, 50, 100],
            seed: 0,
            estimator: CorrelationEstimator::Pearson,
        }
    }
}

impl CorrelationStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_plus == 0 || self.n_minus == 0 {
            return Err(invalid("n_plus and n_minus must be >= 1"));
        }
        if self.trials < 2 {
            return Err(invalid("a correlation needs at least 2 trials"));
        }
        validate_grid(&self.betas, &self.ks)
    }
}

fn validate_grid(betas: &[f64], ks: &[usize]) -> Result<()> {
    if betas.is_empty() || ks.is_empty() {
        return Err(invalid("beta grid and K list must be nonempty"));
    }
    if betas.iter().any(|b| !(*b > 0.0 && *b <= 1.0)) {
        return Err(invalid("every beta must lie in (0, 1]"));
    }
    if betas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("beta grid must be strictly ascending"));
    }
    if *betas.last().unwrap() != 1.0 {
        return Err(invalid("beta grid must end at 1.0"));
    }
    if ks.contains(&0) {
        return Err(invalid("K values must be >= 1"));
    }
    Ok(())
}

/// `points` betas spaced evenly in log from `1/n_minus` to 1.
pub fn log_beta_grid(n_minus: usize, points: usize) -> Vec<f64> {
    assert!(n_minus >= 1 && points >= 1);
    if points == 1 {
        return vec![1.0];
    }
    let lo = (1.0 / n_minus as f64).ln();
    let mut grid: Vec<f64> = (0..points)
        .map(|i| (lo * (1.0 - i as f64 / (points - 1) as f64)).exp())
        .collect();
    grid[points - 1] = 1.0;
    grid
}

/// Sample Pearson correlation. If exactly one side is constant the
/// correlation is 0; if both are, it is undefined.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid("pearson needs two equal-length samples of size >= 2"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    match (sxx > 0.0, syy > 0.0) {
        (false, false) => Err(Error::UndefinedCorrelation("both samples are constant".into())),
        (true, true) => Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)),
        _ => Ok(0.0),
    }
}

/// Average ranks, ties sharing the mean of their positions.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        let r = (start + end - 1) as f64 / 2.0 + 1.0;
        for &ix in &order[start..end] {
            ranks[ix] = r;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation of the average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(invalid("spearman needs equal-length samples"));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Correlations of one Top-K metric with the normalized partial AUC
/// across the beta grid; `None` marks an undefined point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub metric: Metric,
    pub k: usize,
    pub values: Vec<Option<f64>>,
    pub peak: Option<f64>,
    pub argmax_beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurves {
    pub n_plus: usize,
    pub n_minus: usize,
    pub trials: usize,
    pub seed: Option<u64>,
    pub estimator: CorrelationEstimator,
    pub betas: Vec<f64>,
    pub curves: Vec<CorrelationCurve>,
}

impl CorrelationCurves {
    pub fn curve(&self, metric: Metric, k: usize) -> Option<&CorrelationCurve> {
        self.curves.iter().find(|c| c.metric == metric && c.k == k)
    }

    /// Correlation at the last grid point (beta = 1, plain AUC).
    pub fn at_auc(&self, metric: Metric, k: usize) -> Option<f64> {
        self.curve(metric, k).and_then(|c| *c.values.last()?)
    }

    /// Count of undefined points over all curves.
    pub fn missing_points(&self) -> usize {
        self.curves.iter().map(|c| c.values.iter().filter(|v| v.is_none()).count()).sum()
    }

    /// Columns `metric,k,beta,correlation`; undefined points leave the last
    /// column empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "k", "beta", "correlation"])?;
        for c in &self.curves {
            for (beta, v) in self.betas.iter().zip(&c.values) {
                let v = v.map(|x| x.to_string()).unwrap_or_default();
                w.write_record([c.metric.name(), &c.k.to_string(), &beta.to_string(), &v])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

const TOPK_METRICS: [Metric; 3] = [Metric::Recall, Metric::Precision, Metric::Ndcg];

/// One trial's row: Top-K metrics (metric-major, then K) then the
/// normalized partial AUC at each `m`.
fn trial_row(ranked: &RankedList, ks: &[usize], ms: &[usize]) -> Vec<f64> {
    let mut row = Vec::with_capacity(TOPK_METRICS.len() * ks.len() + ms.len());
    for metric in TOPK_METRICS {
        for &k in ks {
            row.push(match metric {
                Metric::Recall => ranked.recall_at_k::<f64>(k),
                Metric::Precision => ranked.precision_at_k::<f64>(k),
                _ => ranked.ndcg_at_k::<f64>(k),
            });
        }
    }
    row.extend(ms.iter().map(|&m| ranked.opauc_normalized_top::<f64>(m)));
    row
}

fn curves_from_rows(
    rows: &[Vec<f64>],
    betas: &[f64],
    ks: &[usize],
    estimator: CorrelationEstimator,
) -> Vec<CorrelationCurve> {
    let width = rows[0].len();
    let columns: Vec<Vec<f64>> = (0..width)
        .into_par_iter()
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect();
    let columns = match estimator {
        CorrelationEstimator::Pearson => columns,
        CorrelationEstimator::Spearman => columns.par_iter().map(|c| average_ranks(c)).collect(),
    };
    let n_topk = TOPK_METRICS.len() * ks.len();
    let (topk, opauc) = columns.split_at(n_topk);
    (0..n_topk)
        .into_par_iter()
        .map(|ix| {
            let metric = TOPK_METRICS[ix / ks.len()];
            let k = ks[ix % ks.len()];
            let values: Vec<Option<f64>> = opauc.iter().map(|y| pearson(&topk[ix], y).ok()).collect();
            let best = values
                .iter()
                .zip(betas)
                .filter_map(|(v, b)| v.map(|v| (v, *b)))
                .fold(None, |acc: Option<(f64, f64)>, (v, b)| match acc {
                    Some((bv, _)) if bv >= v => acc,
                    _ => Some((v, b)),
                });
            CorrelationCurve { metric, k, values, peak: best.map(|b| b.0), argmax_beta: best.map(|b| b.1) }
        })
        .collect()
}

/// Correlation curves over a given set of rankings, all with the same
/// population sizes.
pub fn correlation_from_rankings(
    rankings: &[RankedList],
    betas: &[f64],
    ks: &[usize],
    estimator: CorrelationEstimator,
) -> Result<CorrelationCurves> {
    validate_grid(betas, ks)?;
    let first = rankings.first().ok_or_else(|| invalid("no rankings"))?;
    let (n_plus, n_minus) = (first.n_pos(), first.n_neg());
    if rankings.len() < 2 {
        return Err(invalid("a correlation needs at least 2 rankings"));
    }
    if rankings.iter().any(|r| r.n_pos() != n_plus || r.n_neg() != n_minus) {
        return Err(invalid("rankings differ in population sizes"));
    }
    let ms: Vec<usize> = betas.iter().map(|&b| top_negative_count(n_minus, b)).collect();
    let rows: Vec<Vec<f64>> = rankings.par_iter().map(|r| trial_row(r, ks, &ms)).collect();
    let curves = curves_from_rows(&rows, betas, ks, estimator);
    Ok(CorrelationCurves {
        n_plus,
        n_minus,
        trials: rankings.len(),
        seed: None,
        estimator,
        betas: betas.to_vec(),
        curves,
    })
}

/// Draws `cfg.trials` uniform permutations and correlates every Top-K
/// metric with the normalized partial AUC at each beta.
///
/// Trial `t` uses its own stream, so the result does not depend on the
/// thread count.
pub fn correlation_study(cfg: &CorrelationStudyConfig) -> Result<CorrelationCurves> {
    cfg.validate()?;
    let ms: Vec<usize> = cfg.betas.iter().map(|&b| top_negative_count(cfg.n_minus, b)).collect();
    let rows: Vec<Vec<f64>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(cfg.seed, TRIAL_STREAM, t);
            let ranked = sample_ranked(cfg.n_plus, cfg.n_minus, &mut rng)?;
            Ok(trial_row(&ranked, &cfg.ks, &ms))
        })
        .collect::<Result<_>>()?;
    let curves = curves_from_rows(&rows, &cfg.betas, &cfg.ks, cfg.estimator);
    Ok(CorrelationCurves {
        n_plus: cfg.n_plus,
        n_minus: cfg.n_minus,
        trials: cfg.trials,
        seed: Some(cfg.seed),
        estimator: cfg.estimator,
        betas: cfg.betas.clone(),
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pearson_hand_cases() {
        let xs = [1.0, 2.0, 3.0, 4.5];
        let lin: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert_relative_eq!(pearson(&xs, &lin).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_relative_eq!(pearson(&xs, &neg).unwrap(), -1.0, epsilon = 1e-12);
        assert_relative_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 0.5, epsilon = 1e-12);
        assert!(matches!(pearson(&[1.0, 1.0], &[2.0, 2.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn spearman_uses_average_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [1.0, 8.0, 27.0, 64.0];
        assert_relative_eq!(spearman(&xs, &ys).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_is_log_spaced_and_ends_at_one() {
        let g = log_beta_grid(800, 40);
        assert_eq!(g.len(), 40);
        assert_relative_eq!(g[0], 1.0 / 800.0, epsilon = 1e-15);
        assert_eq!(g[39], 1.0);
        let ratios: Vec<f64> = g.windows(2).map(|w| w[1] / w[0]).collect();
        for r in &ratios {
            assert_relative_eq!(*r, ratios[0], max_relative = 1e-9);
        }
    }

    #[test]
    fn identical_rankings_give_missing_points() {
        let r = RankedList::from_sorted_labels(vec![true, false, true, false]).unwrap();
        let curves = correlation_from_rankings(&[r.clone(), r], &[0.5, 1.0], &[1, 2], CorrelationEstimator::Pearson).unwrap();
        assert_eq!(curves.missing_points(), 2 * 3 * 2);
        assert!(curves.curves.iter().all(|c| c.peak.is_none() && c.argmax_beta.is_none()));
        let csv = curves.to_csv().unwrap();
        assert!(csv.starts_with("metric,k,beta,correlation\n"));
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn study_is_deterministic_and_bounded() {
        let cfg = CorrelationStudyConfig {
            n_plus: 20,
            n_minus: 80,
            trials: 500,
            betas: log_beta_grid(80, 8),
            ks: vec![5, 10],
            seed: 3,
            estimator: CorrelationEstimator::Pearson,
        };
        let a = correlation_study(&cfg).unwrap();
        let b = correlation_study(&cfg).unwrap();
        assert_eq!(a, b);
        for c in &a.curves {
            for v in c.values.iter().flatten() {
                assert!((-1.0..=1.0).contains(v));
            }
        }
        // precision@K = (n+/K) recall@K, so the two curves coincide
        let r = a.curve(Metric::Recall, 5).unwrap();
        let p = a.curve(Metric::Precision, 5).unwrap();
        for (x, y) in r.values.iter().zip(&p.values) {
            assert_relative_eq!(x.unwrap(), y.unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = CorrelationStudyConfig { trials: 10, ..CorrelationStudyConfig::default() };
        assert!(CorrelationStudyConfig { trials: 1, ..base.clone() }.validate().is_err());
        assert!(CorrelationStudyConfig { betas: vec![0.5, 0.9], ..base.clone() }.validate().is_err());
        assert!(CorrelationStudyConfig { betas: vec![0.5, 0.2, 1.0], ..base.clone() }.validate().is_err());
        assert!(CorrelationStudyConfig { ks: vec![0], ..base }.validate().is_err());
    }
}
