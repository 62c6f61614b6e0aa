//! Command-line driver: data preparation, training, evaluation, sweeps and
//! the simulation studies, with every run recorded in a manifest.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::Value;

use config::{parse_override_value, LoadedConfig};
use error::{config_err, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "hns", version, about = "Hard negative sampling experiments for implicit-feedback recommenders")]
pub struct Cli {
    /// Worker threads for parallel sections; 1 gives bitwise reproducible training.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML experiment config.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set sampler.M=3`. Repeatable; applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Run directory; defaults to `output_dir`, then `$HNS_OUTPUT_ROOT/<run_id>`, then `runs/<run_id>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter and split a raw interaction log into train/valid/test files.
    Prep {
        #[command(flatten)]
        common: Common,
        /// Raw `user item [rating] [timestamp]` log.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train a model and write its checkpoint and loss log.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory written by `prep`.
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Score a checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split directory; defaults to the `split` folder next to the checkpoint, then the config's data.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
    },
    /// Train and evaluate once per value of one config key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Grid as `key=v1,v2,...`, replacing the config's `[sweep]` section.
        #[arg(long, value_name = "KEY=V1,V2,...")]
        grid: Option<String>,
    },
    /// Monte Carlo studies.
    #[command(subcommand)]
    Simulate(Simulate),
    /// Check the Top-K bounds on every ranking up to the given sizes.
    VerifyBounds {
        #[arg(long, default_value_t = 4)]
        max_n_plus: usize,
        #[arg(long, default_value_t = 6)]
        max_n_minus: usize,
        /// Also write `verify_bounds.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum Simulate {
    /// Correlation between Top-K metrics and the partial AUC over random rankings.
    Correlation {
        #[command(flatten)]
        common: Common,
    },
    /// Per-rank selection probabilities of negative samplers.
    Sampling {
        #[command(flatten)]
        common: Common,
    },
}

fn path_value(p: &std::path::Path) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

fn load(common: &Common, extra: &[(&str, Value)]) -> CliResult<LoadedConfig> {
    let mut loaded = LoadedConfig::load(common.config.as_deref(), &common.set)?;
    for (key, value) in extra {
        loaded.set(key, value.clone())?;
    }
    if let Some(seed) = common.seed {
        loaded.set("seed", Value::Integer(seed as i64))?;
    }
    if let Some(out) = &common.out {
        loaded.set("output_dir", path_value(out))?;
    }
    Ok(loaded)
}

fn parse_grid(spec: &str) -> CliResult<(String, Vec<Value>)> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| config_err(format!("grid {spec:?} is not key=v1,v2,...")))?;
    let values = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(parse_override_value)
        .collect();
    Ok((key.trim().to_string(), values))
}

fn report(written: &[PathBuf]) {
    for p in written {
        println!("{}", p.display());
    }
}

fn execute(cli: Cli) -> CliResult<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config_err("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    match cli.command {
        Command::Prep { common, data } => {
            let mut extra = Vec::new();
            if let Some(d) = &data {
                extra.push(("data.path", path_value(d)));
            }
            let cfg = load(&common, &extra)?.config;
            report(&commands::prep(&cfg, &cfg.run_dir()?)?);
        }
        Command::Train { common, data, split } => {
            let mut extra = Vec::new();
            if let Some(d) = &data {
                extra.push(("data.path", path_value(d)));
            }
            if let Some(d) = &split {
                extra.push(("data.split_dir", path_value(d)));
            }
            let cfg = load(&common, &extra)?.config;
            report(&commands::train_cmd(&cfg, &cfg.run_dir()?)?);
        }
        Command::Evaluate { common, checkpoint, split, ks, betas } => {
            let mut extra = Vec::new();
            if let Some(ks) = ks {
                extra.push(("eval.ks", Value::Array(ks.into_iter().map(|k| Value::Integer(k as i64)).collect())));
            }
            if let Some(betas) = betas {
                extra.push(("eval.betas", Value::Array(betas.into_iter().map(Value::Float).collect())));
            }
            let loaded = load(&common, &extra)?;
            let cfg = loaded.config;
            let ckpt_dir = checkpoint.parent().map(PathBuf::from).unwrap_or_default();
            let split = split.or_else(|| {
                let beside = ckpt_dir.join(commands::SPLIT_DIR);
                (cfg.data.split_dir.is_none() && cfg.data.path.is_none() && beside.is_dir()).then_some(beside)
            });
            let dir = match (&common.out, &cfg.output_dir) {
                (None, None) => ckpt_dir,
                _ => cfg.run_dir()?,
            };
            report(&commands::evaluate_cmd(&cfg, &checkpoint, split.as_deref(), &dir)?);
        }
        Command::Sweep { common, grid } => {
            let loaded = load(&common, &[])?;
            let (key, values) = match grid {
                Some(g) => parse_grid(&g)?,
                None => {
                    let s = loaded
                        .config
                        .sweep
                        .clone()
                        .ok_or_else(|| config_err("no grid: pass --grid or add a [sweep] section"))?;
                    (s.key, s.values)
                }
            };
            let dir = loaded.config.run_dir()?;
            let (sweep, written) = commands::sweep_cmd(&loaded, &key, &values, &dir)?;
            report(&written);
            for b in &sweep.best {
                let param = b.param.map(|p| p.to_string()).unwrap_or_default();
                println!("best {key} for {}@{param}: {} ({})", b.metric, b.best_value, b.score);
            }
            if sweep.failures() > 0 {
                eprintln!("{} of {} sweep points failed", sweep.failures(), sweep.points.len());
                return Ok(ExitCode::from(1));
            }
        }
        Command::Simulate(Simulate::Correlation { common }) => {
            let cfg = load(&common, &[])?.config;
            report(&commands::simulate_correlation(&cfg, &cfg.run_dir()?)?);
        }
        Command::Simulate(Simulate::Sampling { common }) => {
            let cfg = load(&common, &[])?.config;
            report(&commands::simulate_sampling(&cfg, &cfg.run_dir()?)?);
        }
        Command::VerifyBounds { max_n_plus, max_n_minus, out } => {
            if !commands::verify_bounds_cmd(max_n_plus, max_n_minus, out.as_deref())? {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, S>(args: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
