//! Experiment configuration: one TOML file with flat sections.
//!
//! Precedence, lowest first: built-in defaults, the config file, `--set
//! key=value` overrides in the order given, then dedicated flags such as
//! `--seed` or `--out`. Relative paths in the file resolve against the
//! file's directory; paths given through `--set` resolve against the
//! working directory.

use std::path::{Path, PathBuf};

use hns_core::dataset::{RatingThreshold, SplitConfig};
use hns_core::sampler::{SamplerKeys, SamplerSpec};
use hns_core::simlab::{log_beta_grid, CorrelationEstimator, CorrelationStudyConfig};
use hns_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{config_err, CliResult};

/// Environment variable naming the directory run folders are created in.
pub const OUTPUT_ROOT_ENV: &str = "HNS_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    /// Root seed; every component derives its own stream from it.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub seeds: SeedOverrides,
    pub data: DataConfig,
    pub train: TrainSection,
    pub sampler: SamplerKeys,
    pub eval: EvalSection,
    pub sweep: Option<SweepSection>,
    pub simulate: SimulateSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            seed: 0,
            output_dir: None,
            seeds: SeedOverrides::default(),
            data: DataConfig::default(),
            train: TrainSection::default(),
            sampler: SamplerKeys::from(&SamplerSpec::Dns { m: 5, pool: 200 }),
            eval: EvalSection::default(),
            sweep: None,
            simulate: SimulateSection::default(),
        }
    }
}

/// Per-component replacements for the root seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedOverrides {
    pub split: Option<u64>,
    pub train: Option<u64>,
    pub simulate: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Raw `user item [rating] [timestamp]` log.
    pub path: Option<PathBuf>,
    /// Directory written by `prep`; takes priority over `path`.
    pub split_dir: Option<PathBuf>,
    pub min_rating: Option<f64>,
    pub rating_inclusive: bool,
    /// 0 or 1 disables the filter.
    pub k_core: usize,
    pub train_fraction: f64,
    pub valid_fraction_of_train: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let split = SplitConfig::default();
        Self {
            path: None,
            split_dir: None,
            min_rating: None,
            rating_inclusive: true,
            k_core: 0,
            train_fraction: split.train_fraction,
            valid_fraction_of_train: split.valid_fraction_of_train,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub single_draw: bool,
    pub eval_every: usize,
    /// Scalar type for the embeddings: "f64" or "f32".
    pub precision: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            dim: t.dim,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            single_draw: t.single_draw,
            eval_every: t.eval_every,
            precision: "f64".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub ks: Vec<usize>,
    pub betas: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { ks: vec![5, 20, 50], betas: vec![0.01, 0.1] }
    }
}

/// Grid over one dotted config key, e.g. `sampler.M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub key: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub correlation: CorrelationSection,
    pub sampling: SamplingSection,
    pub bounds: BoundsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationSection {
    pub n_plus: usize,
    pub n_minus: usize,
    pub trials: usize,
    pub ks: Vec<usize>,
    /// Size of the log-spaced grid from `1/n_minus` to 1; ignored if `betas` is set.
    pub beta_points: usize,
    pub betas: Option<Vec<f64>>,
    pub estimator: CorrelationEstimator,
}

impl Default for CorrelationSection {
    fn default() -> Self {
        Self {
            n_plus: 200,
            n_minus: 800,
            trials: 100_000,
            ks: vec![5, 20, 50, 100],
            beta_points: 40,
            betas: None,
            estimator: CorrelationEstimator::Pearson,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    /// Standard-normal negative scores are drawn when no checkpoint is given.
    pub n_negatives: usize,
    pub positive_score: f64,
    pub draws: usize,
    pub samplers: Vec<SamplerKeys>,
    /// Use a trained model's scores for one context instead.
    pub checkpoint: Option<PathBuf>,
    pub context: u32,
    /// Positive item for the pair losses; defaults to the context's first
    /// training positive.
    pub positive: Option<u32>,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            n_negatives: 1000,
            positive_score: 0.0,
            draws: 10_000,
            samplers: [1, 5, 20]
                .iter()
                .map(|&m| SamplerKeys::from(&SamplerSpec::Dns { m, pool: 100 }))
                .collect(),
            checkpoint: None,
            context: 0,
            positive: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub max_n_plus: usize,
    pub max_n_minus: usize,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self { max_n_plus: 4, max_n_minus: 6 }
    }
}

/// A parsed config plus the table it came from, so sweeps can re-apply
/// overrides on top of the same base.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub table: Table,
    pub source: Option<PathBuf>,
}

pub fn parse_override_value(raw: &str) -> Value {
    // Parse as a TOML value when possible so numbers, booleans and arrays
    // keep their types; otherwise take the raw text as a string.
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

/// Sets `dotted.key = value` in `table`, creating sections as needed.
pub fn set_key(table: &mut Table, key: &str, value: Value) -> CliResult<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(format!("bad override key {key:?}")));
    }
    let (last, sections) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for s in sections {
        let entry = cur.entry(s.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_err(format!("{key}: {s} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub fn apply_override(table: &mut Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override {assignment:?} is not key=value")))?;
    set_key(table, key.trim(), parse_override_value(raw.trim()))
}

fn resolve_against(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl LoadedConfig {
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| config_err(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        // File-relative paths are fixed before overrides are applied.
        let base = path.and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default();
        let mut config = Self::decode(table.clone())?;
        config.resolve_paths(&base);
        table = Table::try_from(&config).map_err(|e| config_err(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config = Self::decode(table.clone())?;
        Ok(Self { config, table, source: path.map(Path::to_path_buf) })
    }

    fn decode(table: Table) -> CliResult<ExperimentConfig> {
        Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_err(e.to_string()))
    }

    /// Applies a flag on top of everything loaded so far.
    pub fn set(&mut self, key: &str, value: Value) -> CliResult<()> {
        set_key(&mut self.table, key, value)?;
        self.config = Self::decode(self.table.clone())?;
        Ok(())
    }

    /// The config with one more override on top.
    pub fn with_override(&self, key: &str, value: Value) -> CliResult<ExperimentConfig> {
        let mut table = self.table.clone();
        set_key(&mut table, key, value)?;
        Self::decode(table)
    }
}

impl ExperimentConfig {
    fn resolve_paths(&mut self, base: &Path) {
        resolve_against(base, &mut self.output_dir);
        resolve_against(base, &mut self.data.path);
        resolve_against(base, &mut self.data.split_dir);
        resolve_against(base, &mut self.simulate.sampling.checkpoint);
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate_run_id(&self) -> CliResult<()> {
        let ok = !self.run_id.is_empty()
            && self.run_id != "."
            && self.run_id != ".."
            && self.run_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
        if ok {
            Ok(())
        } else {
            Err(config_err(format!(
                "run_id {:?} must be nonempty and use only letters, digits, '-', '_' or '.'",
                self.run_id
            )))
        }
    }

    /// Run directory: `output_dir` if set, else `$HNS_OUTPUT_ROOT/<run_id>`,
    /// else `runs/<run_id>`.
    pub fn run_dir(&self) -> CliResult<PathBuf> {
        if let Some(dir) = &self.output_dir {
            return Ok(dir.clone());
        }
        self.validate_run_id()?;
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"));
        Ok(root.join(&self.run_id))
    }

    pub fn split_seed(&self) -> u64 {
        self.seeds.split.unwrap_or(self.seed)
    }

    pub fn train_seed(&self) -> u64 {
        self.seeds.train.unwrap_or(self.seed)
    }

    pub fn simulate_seed(&self) -> u64 {
        self.seeds.simulate.unwrap_or(self.seed)
    }

    pub fn split_config(&self) -> CliResult<SplitConfig> {
        let cfg = SplitConfig {
            train_fraction: self.data.train_fraction,
            valid_fraction_of_train: self.data.valid_fraction_of_train,
            seed: self.split_seed(),
        };
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn rating_threshold(&self) -> Option<RatingThreshold> {
        self.data.min_rating.map(|value| RatingThreshold { value, inclusive: self.data.rating_inclusive })
    }

    pub fn sampler_spec(&self) -> CliResult<SamplerSpec> {
        SamplerSpec::try_from(&self.sampler).map_err(|e| config_err(e.to_string()))
    }

    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let t = &self.train;
        let cfg = TrainConfig {
            dim: t.dim,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            adam_eps: t.adam_eps,
            sampler: self.sampler_spec()?,
            seed: self.train_seed(),
            single_draw: t.single_draw,
            eval_every: t.eval_every,
            eval_ks: self.eval.ks.clone(),
            eval_betas: self.eval.betas.clone(),
        };
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        if !matches!(t.precision.as_str(), "f32" | "f64") {
            return Err(config_err(format!("train.precision must be \"f32\" or \"f64\", got {:?}", t.precision)));
        }
        self.validate_eval()?;
        Ok(cfg)
    }

    pub fn validate_eval(&self) -> CliResult<()> {
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(config_err("eval.ks must be a nonempty list of positive integers"));
        }
        if let Some(b) = self.eval.betas.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return Err(config_err(format!("eval.betas entry {b} not in (0, 1]")));
        }
        Ok(())
    }

    pub fn correlation_config(&self) -> CliResult<CorrelationStudyConfig> {
        let c = &self.simulate.correlation;
        if c.n_minus == 0 {
            return Err(config_err("simulate.correlation.n_minus must be >= 1"));
        }
        let betas = match &c.betas {
            Some(b) => b.clone(),
            None => {
                if c.beta_points == 0 {
                    return Err(config_err("simulate.correlation.beta_points must be >= 1"));
                }
                log_beta_grid(c.n_minus, c.beta_points)
            }
        };
        let cfg = CorrelationStudyConfig {
            n_plus: c.n_plus,
            n_minus: c.n_minus,
            trials: c.trials,
            betas,
            ks: c.ks.clone(),
            seed: self.simulate_seed(),
            estimator: c.estimator,
        };
        cfg.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cfg)
    }

    pub fn sampling_specs(&self) -> CliResult<Vec<SamplerSpec>> {
        let specs = self
            .simulate
            .sampling
            .samplers
            .iter()
            .map(|k| SamplerSpec::try_from(k).map_err(|e| config_err(e.to_string())))
            .collect::<CliResult<Vec<_>>>()?;
        if specs.is_empty() {
            return Err(config_err("simulate.sampling.samplers is empty"));
        }
        if self.simulate.sampling.draws == 0 {
            return Err(config_err("simulate.sampling.draws must be >= 1"));
        }
        Ok(specs)
    }
}
