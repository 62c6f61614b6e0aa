//! Subcommand bodies. Each returns the files it wrote.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;
use hns_core::dataset::{
    build_and_split, dedup_interactions, k_core_filter, load_split, negatives_of, parse_interactions,
    write_split, InteractionSet, Split,
};
use hns_core::metrics::{evaluate_model, Metric, Param, RankedEvaluation};
use hns_core::simlab::{correlation_study, sampling_distribution_study, synthetic_scores, verify_bounds};
use hns_core::trainer::{train, Checkpoint, TrainLog};
use hns_core::{Scalar, Model};
use serde::Serialize;
use toml::Value;

use crate::config::{ExperimentConfig, LoadedConfig};
use crate::error::{config_err, CliError, CliResult};
use crate::manifest::{write_atomic, RunManifest};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const SPLIT_DIR: &str = "split";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";

/// A loaded split plus the files it was read from.
pub struct Data {
    pub split: Split,
    pub inputs: Vec<PathBuf>,
}

fn require_exists(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(config_err(format!("{what} {} does not exist", path.display())))
    }
}

pub fn load_split_dir(dir: &Path) -> CliResult<Data> {
    require_exists(dir, "split directory")?;
    let split = load_split(dir).with_context(|| format!("reading split from {}", dir.display()))?;
    Ok(Data { split, inputs: vec![dir.to_path_buf()] })
}

/// Reads the dataset named by `[data]`: a prepared split directory if set,
/// otherwise the raw log, filtered and split per user.
pub fn load_data(cfg: &ExperimentConfig) -> CliResult<Data> {
    if let Some(dir) = &cfg.data.split_dir {
        return load_split_dir(dir);
    }
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| config_err("no dataset: set data.path or data.split_dir"))?;
    require_exists(path, "dataset path")?;
    let split_cfg = cfg.split_config()?;
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = parse_interactions(BufReader::new(file), cfg.rating_threshold())
        .with_context(|| format!("parsing {}", path.display()))?;
    let rows = dedup_interactions(rows);
    let rows = if cfg.data.k_core > 1 { k_core_filter(rows, cfg.data.k_core) } else { rows };
    let split = build_and_split(&rows, &split_cfg).with_context(|| format!("splitting {}", path.display()))?;
    log::info!(
        "{}: {} users, {} items, {}/{}/{} train/valid/test interactions",
        path.display(),
        split.train.num_contexts(),
        split.train.num_items(),
        split.train.num_interactions(),
        split.valid.num_interactions(),
        split.test.num_interactions()
    );
    Ok(Data { split, inputs: vec![path.clone()] })
}

fn write_text(path: &Path, text: &str) -> CliResult<PathBuf> {
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<PathBuf> {
    let text = serde_json::to_string_pretty(value).context("serializing report")?;
    write_text(path, &text)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

/// Opens a manifest, runs `body`, and records inputs and artifacts.
fn with_manifest(
    dir: &Path,
    manifest_name: &str,
    command: &str,
    cfg: &ExperimentConfig,
    body: impl FnOnce(&mut Vec<PathBuf>) -> CliResult<Vec<PathBuf>>,
) -> CliResult<Vec<PathBuf>> {
    create_dir(dir)?;
    let config_text = cfg.to_toml()?;
    let mut manifest = RunManifest::start(command, cfg.seed, config_text.clone());
    let mut inputs = Vec::new();
    let mut artifacts = body(&mut inputs)?;
    artifacts.push(write_text(&dir.join(RESOLVED_CONFIG_FILE), &config_text)?);
    for p in &inputs {
        manifest.add_input(p).with_context(|| format!("hashing {}", p.display()))?;
    }
    for p in &artifacts {
        manifest.add_artifact(p).with_context(|| format!("hashing {}", p.display()))?;
    }
    artifacts.push(manifest.finish_as(dir, manifest_name).context("writing manifest")?);
    Ok(artifacts)
}

pub fn prep(cfg: &ExperimentConfig, dir: &Path) -> CliResult<Vec<PathBuf>> {
    with_manifest(dir, "manifest.json", "prep", cfg, |inputs| {
        let data = load_data(cfg)?;
        inputs.extend(data.inputs);
        let written = write_split(dir, &data.split).context("writing split files")?;
        Ok(written)
    })
}

pub fn train_log_csv(log: &TrainLog) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "mean_loss", "seconds", "skipped_pairs"]).map_err(anyhow::Error::from)?;
    w.write_record(["0", &log.initial_loss.to_string(), "0", "0"]).map_err(anyhow::Error::from)?;
    for e in &log.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.mean_loss.to_string(),
            e.seconds.to_string(),
            e.skipped_pairs.to_string(),
        ])
        .map_err(anyhow::Error::from)?;
    }
    csv_string(w)
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> CliResult<String> {
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Validation snapshots as `epoch,metric,param,value`.
pub fn snapshots_csv(log: &TrainLog) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "metric", "param", "value"]).map_err(anyhow::Error::from)?;
    for s in &log.evaluations {
        for r in &s.eval.rows {
            let param = r.param.map(|p| p.to_string()).unwrap_or_default();
            w.write_record([s.epoch.to_string(), r.metric.name().into(), param, r.value.to_string()])
                .map_err(anyhow::Error::from)?;
        }
    }
    csv_string(w)
}

fn fit<T: Scalar>(cfg: &ExperimentConfig, split: &Split, dir: &Path) -> CliResult<(Model, Vec<PathBuf>)> {
    let tc = cfg.train_config()?;
    let valid = (tc.eval_every > 0).then_some(&split.valid);
    let trained = train::<T>(&split.train, valid, &tc).context("training failed")?;
    let mut written = Vec::new();
    let ckpt = Checkpoint::new(&trained.model, split.id_maps(), Some(&trained.optimizer));
    let path = dir.join(CHECKPOINT_FILE);
    ckpt.save(&path).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    written.push(write_text(&dir.join("train_log.csv"), &train_log_csv(&trained.log)?)?);
    written.push(write_json(&dir.join("train_log.json"), &trained.log)?);
    if !trained.log.evaluations.is_empty() {
        written.push(write_text(&dir.join("valid_metrics.csv"), &snapshots_csv(&trained.log)?)?);
    }
    if let Some(last) = trained.log.epochs.last() {
        log::info!("trained {} epochs, final loss {:.6}", last.epoch, last.mean_loss);
    }
    // Evaluation always runs in f64.
    let model = Checkpoint::<f64>::from_json(&ckpt.to_json()?)?.model()?;
    Ok((model, written))
}

/// Trains on `split` and writes the checkpoint, logs, and a copy of the split.
fn train_into(cfg: &ExperimentConfig, data: &Data, dir: &Path) -> CliResult<(Model, Vec<PathBuf>)> {
    let mut written = write_split(&dir.join(SPLIT_DIR), &data.split).context("writing split files")?;
    let (model, files) = match cfg.train.precision.as_str() {
        "f32" => fit::<f32>(cfg, &data.split, dir)?,
        _ => fit::<f64>(cfg, &data.split, dir)?,
    };
    written.extend(files);
    Ok((model, written))
}

pub fn train_cmd(cfg: &ExperimentConfig, dir: &Path) -> CliResult<Vec<PathBuf>> {
    cfg.train_config()?;
    with_manifest(dir, "manifest.json", "train", cfg, |inputs| {
        let data = load_data(cfg)?;
        inputs.extend(data.inputs.iter().cloned());
        Ok(train_into(cfg, &data, dir)?.1)
    })
}

/// Test-set evaluation with train and validation positives filtered out.
pub fn evaluate_split(model: &Model, split: &Split, ks: &[usize], betas: &[f64]) -> CliResult<RankedEvaluation> {
    if split.test.num_interactions() == 0 {
        return Err(CliError::Runtime(anyhow::anyhow!("test set is empty")));
    }
    let seen: InteractionSet = split.train.union(&split.valid)?;
    Ok(evaluate_model(model, &seen, &split.test, ks, betas).context("evaluation failed")?)
}

fn write_evaluation(dir: &Path, eval: &RankedEvaluation) -> CliResult<Vec<PathBuf>> {
    Ok(vec![
        write_text(&dir.join("evaluation.csv"), &eval.to_csv()?)?,
        write_json(&dir.join("evaluation.json"), eval)?,
    ])
}

pub fn evaluate_cmd(cfg: &ExperimentConfig, checkpoint: &Path, split_dir: Option<&Path>, dir: &Path) -> CliResult<Vec<PathBuf>> {
    cfg.validate_eval()?;
    require_exists(checkpoint, "checkpoint")?;
    with_manifest(dir, "evaluate_manifest.json", "evaluate", cfg, |inputs| {
        let ckpt = Checkpoint::<f64>::load(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
        let data = match split_dir {
            Some(d) => load_split_dir(d)?,
            None => load_data(cfg)?,
        };
        inputs.push(checkpoint.to_path_buf());
        inputs.extend(data.inputs.iter().cloned());
        ckpt.check_id_maps(data.split.id_maps()).map_err(|e| config_err(format!(
            "checkpoint {} does not match the dataset: {e}",
            checkpoint.display()
        )))?;
        let model = ckpt.model()?;
        let eval = evaluate_split(&model, &data.split, &cfg.eval.ks, &cfg.eval.betas)?;
        log::info!(
            "evaluated {} contexts ({} skipped)",
            eval.contexts_evaluated,
            eval.contexts_skipped
        );
        write_evaluation(dir, &eval)
    })
}

/// Human-readable grid value: strings unquoted, everything else as TOML.
pub fn value_label(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub point: usize,
    pub value: String,
    pub status: String,
    pub error: Option<String>,
    pub evaluation: Option<RankedEvaluation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepBest {
    pub metric: Metric,
    pub param: Option<Param>,
    pub best_value: String,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub key: String,
    pub points: Vec<SweepPoint>,
    pub best: Vec<SweepBest>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.error.is_some()).count()
    }

    /// Best grid value per metric row; ties go to the earlier grid point.
    fn compute_best(points: &[SweepPoint]) -> Vec<SweepBest> {
        let Some(layout) = points.iter().find_map(|p| p.evaluation.as_ref()) else {
            return Vec::new();
        };
        layout
            .rows
            .iter()
            .map(|row| {
                let mut best: Option<(f64, &str)> = None;
                for p in points {
                    let Some(v) = p.evaluation.as_ref().and_then(|e| e.get(row.metric, row.param)) else {
                        continue;
                    };
                    if best.is_none_or(|(b, _)| v > b) {
                        best = Some((v, &p.value));
                    }
                }
                let (score, value) = best.expect("at least one point has this row");
                SweepBest { metric: row.metric, param: row.param, best_value: value.to_string(), score }
            })
            .collect()
    }

    /// One row per point and metric: `point,value,status,metric,param,score`.
    /// Failed points get a single row with empty metric columns.
    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["point", "value", "status", "metric", "param", "score"]).map_err(anyhow::Error::from)?;
        for p in &self.points {
            match &p.evaluation {
                Some(eval) => {
                    for r in &eval.rows {
                        let param = r.param.map(|x| x.to_string()).unwrap_or_default();
                        w.write_record([
                            p.point.to_string(),
                            p.value.clone(),
                            p.status.clone(),
                            r.metric.name().into(),
                            param,
                            r.value.to_string(),
                        ])
                        .map_err(anyhow::Error::from)?;
                    }
                }
                None => w
                    .write_record([p.point.to_string(), p.value.clone(), p.status.clone(), String::new(), String::new(), String::new()])
                    .map_err(anyhow::Error::from)?,
            }
        }
        csv_string(w)
    }

    /// `metric,param,best_value,score`.
    pub fn best_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["metric", "param", "best_value", "score"]).map_err(anyhow::Error::from)?;
        for b in &self.best {
            let param = b.param.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([b.metric.name().into(), param, b.best_value.clone(), b.score.to_string()])
                .map_err(anyhow::Error::from)?;
        }
        csv_string(w)
    }
}

fn sweep_point(cfg: &ExperimentConfig, data: &Data, dir: &Path) -> CliResult<(RankedEvaluation, Vec<PathBuf>)> {
    cfg.train_config()?;
    let (model, mut written) = train_into(cfg, data, dir)?;
    let eval = evaluate_split(&model, &data.split, &cfg.eval.ks, &cfg.eval.betas)?;
    written.extend(write_evaluation(dir, &eval)?);
    Ok((eval, written))
}

/// Trains and evaluates once per grid value under `dir/points/<index>`.
/// A failing point is recorded and the sweep moves on.
pub fn sweep_cmd(loaded: &LoadedConfig, key: &str, values: &[Value], dir: &Path) -> CliResult<(SweepReport, Vec<PathBuf>)> {
    if values.is_empty() {
        return Err(config_err("sweep grid is empty"));
    }
    let base = &loaded.config;
    // Decode every point before doing any work, so typos fail fast.
    let configs = values
        .iter()
        .map(|v| loaded.with_override(key, v.clone()))
        .collect::<CliResult<Vec<_>>>()?;
    let mut report = None;
    let written = with_manifest(dir, "manifest.json", "sweep", base, |inputs| {
        let base_data = load_data(base)?;
        inputs.extend(base_data.inputs.iter().cloned());
        let mut points = Vec::new();
        let mut written = Vec::new();
        for (ix, (value, cfg)) in values.iter().zip(&configs).enumerate() {
            let label = value_label(value);
            let point_dir = dir.join("points").join(ix.to_string());
            log::info!("sweep point {ix}: {key} = {label}");
            let same_data = cfg.data == base.data && cfg.split_seed() == base.split_seed();
            let result = create_dir(&point_dir).and_then(|_| {
                if same_data {
                    sweep_point(cfg, &base_data, &point_dir)
                } else {
                    let data = load_data(cfg)?;
                    inputs.extend(data.inputs.iter().cloned());
                    sweep_point(cfg, &data, &point_dir)
                }
            });
            let point = match result {
                Ok((eval, files)) => {
                    written.extend(files);
                    SweepPoint { point: ix, value: label, status: "ok".into(), error: None, evaluation: Some(eval) }
                }
                Err(e) => {
                    log::warn!("sweep point {ix} ({key} = {label}) failed: {e}");
                    let kind = match e {
                        CliError::Config(_) => "config_error",
                        CliError::Runtime(_) => "failed",
                    };
                    SweepPoint { point: ix, value: label, status: kind.into(), error: Some(e.to_string()), evaluation: None }
                }
            };
            points.push(point);
        }
        inputs.sort();
        inputs.dedup();
        let best = SweepReport::compute_best(&points);
        let r = SweepReport { key: key.to_string(), points, best };
        written.push(write_text(&dir.join("sweep.csv"), &r.to_csv()?)?);
        written.push(write_text(&dir.join("sweep_best.csv"), &r.best_csv()?)?);
        written.push(write_json(&dir.join("sweep.json"), &r)?);
        report = Some(r);
        Ok(written)
    })?;
    Ok((report.expect("sweep body ran"), written))
}

/// `metric,k,peak,argmax_beta,auc_correlation`.
pub fn correlation_summary_csv(curves: &hns_core::simlab::CorrelationCurves) -> CliResult<String> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["metric", "k", "peak", "argmax_beta", "auc_correlation"]).map_err(anyhow::Error::from)?;
    for c in &curves.curves {
        w.write_record([
            c.metric.name().to_string(),
            c.k.to_string(),
            opt(c.peak),
            opt(c.argmax_beta),
            opt(c.values.last().copied().flatten()),
        ])
        .map_err(anyhow::Error::from)?;
    }
    csv_string(w)
}

pub fn simulate_correlation(cfg: &ExperimentConfig, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let study = cfg.correlation_config()?;
    with_manifest(dir, "manifest.json", "simulate correlation", cfg, |_| {
        let curves = correlation_study(&study).context("correlation study failed")?;
        if curves.missing_points() > 0 {
            log::warn!("{} correlation points are undefined", curves.missing_points());
        }
        for c in &curves.curves {
            log::info!(
                "{}@{}: peak {:?} at beta {:?}",
                c.metric.name(),
                c.k,
                c.peak,
                c.argmax_beta
            );
        }
        Ok(vec![
            write_text(&dir.join("correlation.csv"), &curves.to_csv()?)?,
            write_text(&dir.join("correlation_summary.csv"), &correlation_summary_csv(&curves)?)?,
            write_json(&dir.join("correlation.json"), &curves)?,
        ])
    })
}

pub fn simulate_sampling(cfg: &ExperimentConfig, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let specs = cfg.sampling_specs()?;
    let s = &cfg.simulate.sampling;
    if let Some(ckpt) = &s.checkpoint {
        require_exists(ckpt, "checkpoint")?;
    } else if s.n_negatives == 0 {
        return Err(config_err("simulate.sampling.n_negatives must be >= 1"));
    }
    with_manifest(dir, "manifest.json", "simulate sampling", cfg, |inputs| {
        let seed = cfg.simulate_seed();
        let report = match &s.checkpoint {
            None => {
                let scores = synthetic_scores(s.n_negatives, seed);
                sampling_distribution_study(&scores, s.positive_score, &specs, s.draws, seed, None)?
            }
            Some(path) => {
                let ckpt = Checkpoint::<f64>::load(path).with_context(|| format!("reading {}", path.display()))?;
                let data = load_data(cfg)?;
                ckpt.check_id_maps(data.split.id_maps())
                    .map_err(|e| config_err(format!("checkpoint {} does not match the dataset: {e}", path.display())))?;
                inputs.push(path.clone());
                inputs.extend(data.inputs.iter().cloned());
                let model = ckpt.model()?;
                let train_set = &data.split.train;
                let c = s.context;
                if c as usize >= train_set.num_contexts() {
                    return Err(config_err(format!("simulate.sampling.context {c} out of range")));
                }
                let pos = match s.positive {
                    Some(p) => p,
                    None => *train_set
                        .positives(c)
                        .first()
                        .ok_or_else(|| config_err(format!("context {c} has no training positives")))?,
                };
                let negatives: Vec<u32> = negatives_of(train_set, c).collect();
                let scores: Vec<f64> = negatives.iter().map(|&j| model.score(c, j)).collect();
                let counts = train_set.item_counts();
                let counts: Vec<u64> = negatives.iter().map(|&j| counts[j as usize]).collect();
                sampling_distribution_study(&scores, model.score(c, pos), &specs, s.draws, seed, Some(&counts))?
            }
        };
        Ok(vec![
            write_text(&dir.join("sampling.csv"), &report.to_csv()?)?,
            write_json(&dir.join("sampling.json"), &report)?,
        ])
    })
}

pub fn verify_bounds_cmd(max_n_plus: usize, max_n_minus: usize, out: Option<&Path>) -> CliResult<bool> {
    let report = verify_bounds(max_n_plus, max_n_minus).map_err(|e| config_err(e.to_string()))?;
    println!("{} cases, {} rankings checked", report.cases, report.checks);
    println!("{} violations", report.violations);
    for v in &report.examples {
        println!(
            "  N+={} N-={} K={} labels={:?}: recall {} in {:?}, precision {} in {:?}",
            v.n_plus, v.n_minus, v.k, v.labels, v.recall, v.recall_bounds, v.precision, v.precision_bounds
        );
    }
    if let Some(dir) = out {
        create_dir(dir)?;
        write_json(&dir.join("verify_bounds.json"), &report)?;
    }
    Ok(report.violations == 0)
}
