use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hns_core::dataset::PlantedBlocks;
use hns_core::metrics::{evaluate_model, Metric};
use hns_core::trainer::Checkpoint;
use hns_core::dataset::load_split;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn toy_config() -> PathBuf {
    crate_dir().join("configs/toy_dns.toml")
}

fn hns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hns"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("HNS_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()));
    rows
}

fn train_toy(dir: &Path, extra: &[&str]) {
    let config = toy_config();
    let mut args = vec!["--threads", "1", "train", "--config", s(&config), "--out", s(dir)];
    args.extend_from_slice(extra);
    ok(&hns(&args));
}

#[test]
fn bundled_toy_log_matches_generator() {
    let path = crate_dir().join("data/toy.txt");
    let expected = PlantedBlocks::default().to_text();
    if std::env::var_os("HNS_BLESS").is_some() {
        fs::write(&path, &expected).unwrap();
    }
    assert_eq!(fs::read_to_string(&path).unwrap(), expected);
}

#[test]
fn train_writes_checkpoint_and_falling_loss() {
    let dir = tempfile::tempdir().unwrap();
    train_toy(dir.path(), &["--set", "train.epochs=30"]);
    for f in ["checkpoint.json", "train_log.csv", "train_log.json", "config.resolved.toml", "manifest.json", "split/id_map.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let rows = read_csv(&dir.path().join("train_log.csv"));
    assert_eq!(rows[0], ["epoch", "mean_loss", "seconds", "skipped_pairs"]);
    let losses: Vec<f64> = rows[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(losses.len(), 31);
    // Trend, not strict monotonicity: each third of training ends lower.
    let third = losses.len() / 3;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    assert!(mean(&losses[third..2 * third]) < mean(&losses[..third]));
    assert!(mean(&losses[2 * third..]) < mean(&losses[third..2 * third]));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 17);
    assert_eq!(manifest["threads"], 1);
    let inputs = manifest["inputs"].as_array().unwrap();
    assert!(inputs[0]["path"].as_str().unwrap().ends_with("toy.txt"));
    assert_eq!(inputs[0]["sha256"].as_str().unwrap().len(), 64);
    let artifacts: Vec<&str> = manifest["artifacts"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap()).collect();
    assert!(artifacts.iter().any(|a| a.ends_with("checkpoint.json")));
    assert!(manifest["finished_unix"].as_f64().unwrap() >= manifest["started_unix"].as_f64().unwrap());
}

#[test]
fn resolved_config_reruns_identically() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    train_toy(a.path(), &["--set", "train.epochs=5"]);
    let resolved = a.path().join("config.resolved.toml");
    ok(&hns(&["--threads", "1", "train", "--config", s(&resolved), "--out", s(b.path())]));
    assert_eq!(
        fs::read(a.path().join("checkpoint.json")).unwrap(),
        fs::read(b.path().join("checkpoint.json")).unwrap()
    );
}

#[test]
fn missing_dataset_is_config_error_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere/ratings.dat");
    let out = hns(&["train", "--data", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(s(&missing)), "{stderr}");
}

#[test]
fn bad_config_keys_exit_2() {
    let out = hns(&["train", "--config", s(&toy_config()), "--set", "train.epoch=3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = hns(&["train", "--config", s(&toy_config()), "--set", "sampler.kind=bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = hns(&["evaluate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_seed_same_checkpoint() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    train_toy(a.path(), &["--set", "train.epochs=10"]);
    train_toy(b.path(), &["--set", "train.epochs=10"]);
    train_toy(c.path(), &["--set", "train.epochs=10", "--seed", "18"]);
    let read = |d: &Path| fs::read(d.join("checkpoint.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    assert_ne!(read(a.path()), read(c.path()));
    for f in ["train.txt", "valid.txt", "test.txt", "id_map.json"] {
        assert_eq!(fs::read(a.path().join("split").join(f)).unwrap(), fs::read(b.path().join("split").join(f)).unwrap());
    }
}

#[test]
fn evaluate_beats_shuffled_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    train_toy(dir.path(), &[]);
    let ckpt_path = dir.path().join("checkpoint.json");
    ok(&hns(&["evaluate", "--checkpoint", s(&ckpt_path), "--ks", "5,20,50", "--betas", "0.1"]));
    let rows = read_csv(&dir.path().join("evaluation.csv"));
    assert_eq!(rows[0], ["metric", "param", "value"]);
    // 3 Top-K metrics x 3 K, AUC, then raw and normalized partial AUC at one beta.
    assert_eq!(rows.len() - 1, 9 + 1 + 2);
    let ndcg50: f64 = rows.iter().find(|r| r[0] == "ndcg" && r[1] == "50").unwrap()[2].parse().unwrap();

    let split = load_split(&dir.path().join("split")).unwrap();
    let ckpt = Checkpoint::<f64>::load(&ckpt_path).unwrap();
    let model = ckpt.model().unwrap();
    let mut items: Vec<f64> = model.item_table().to_vec();
    let dim = model.dim();
    let mut rows_ix: Vec<usize> = (0..model.num_items()).collect();
    rows_ix.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(5));
    let shuffled: Vec<f64> = rows_ix.iter().flat_map(|&r| items[r * dim..(r + 1) * dim].to_vec()).collect();
    items.copy_from_slice(&shuffled);
    let baseline = hns_core::trainer::MfModel::from_parts(
        model.num_contexts(),
        model.num_items(),
        dim,
        model.context_table().to_vec(),
        items,
    )
    .unwrap();
    let seen = split.train.union(&split.valid).unwrap();
    let base = evaluate_model(&baseline, &seen, &split.test, &[50], &[]).unwrap();
    let base50 = base.at_k(Metric::Ndcg, 50).unwrap();
    assert!(ndcg50 > base50 + 0.05, "trained {ndcg50} vs shuffled {base50}");
}

#[test]
fn evaluate_refuses_other_dataset() {
    let dir = tempfile::tempdir().unwrap();
    train_toy(dir.path(), &["--set", "train.epochs=1"]);
    let other = tempfile::tempdir().unwrap();
    let log = other.path().join("log.txt");
    fs::write(&log, "a x\na y\nb x\nb y\nb z\n").unwrap();
    let out = hns(&[
        "evaluate",
        "--checkpoint",
        s(&dir.path().join("checkpoint.json")),
        "--set",
        &format!("data.path={:?}", s(&log)),
        "--out",
        s(other.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}

#[test]
fn evaluate_empty_test_set_fails() {
    let dir = tempfile::tempdir().unwrap();
    train_toy(dir.path(), &["--set", "train.epochs=1"]);
    fs::write(dir.path().join("split/test.txt"), "").unwrap();
    let out = hns(&["evaluate", "--checkpoint", s(&dir.path().join("checkpoint.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("test set is empty"));
}

#[test]
fn prep_then_train_from_split_dir() {
    let dir = tempfile::tempdir().unwrap();
    let prep_dir = dir.path().join("prep");
    ok(&hns(&["prep", "--config", s(&toy_config()), "--out", s(&prep_dir)]));
    for f in ["train.txt", "valid.txt", "test.txt", "id_map.json", "manifest.json"] {
        assert!(prep_dir.join(f).is_file(), "{f}");
    }
    let first = fs::read_to_string(prep_dir.join("train.txt")).unwrap();
    let line = first.lines().next().unwrap();
    assert_eq!(line.split_whitespace().count(), 2);
    assert!(line.split_whitespace().all(|t| t.parse::<u32>().is_ok()));

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    train_toy(&a, &["--set", "train.epochs=3"]);
    train_toy(&b, &["--set", "train.epochs=3", "--split", s(&prep_dir)]);
    assert_eq!(fs::read(a.join("checkpoint.json")).unwrap(), fs::read(b.join("checkpoint.json")).unwrap());
}

#[test]
fn output_root_env_var() {
    let root = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hns"))
        .args(["prep", "--config", s(&toy_config()), "--set", "run_id=\"envrun\""])
        .env("HNS_OUTPUT_ROOT", root.path())
        .output()
        .unwrap();
    ok(&out);
    assert!(root.path().join("envrun/train.txt").is_file());
}

#[test]
fn one_point_sweep_equals_train_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let sweep_dir = dir.path().join("sweep");
    let single = dir.path().join("single");
    ok(&hns(&[
        "--threads", "1", "sweep", "--config", s(&toy_config()), "--set", "train.epochs=20",
        "--grid", "sampler.M=2", "--out", s(&sweep_dir),
    ]));
    train_toy(&single, &["--set", "train.epochs=20", "--set", "sampler.M=2"]);
    ok(&hns(&["evaluate", "--config", s(&toy_config()), "--checkpoint", s(&single.join("checkpoint.json")), "--out", s(&single)]));
    assert_eq!(
        fs::read(sweep_dir.join("points/0/checkpoint.json")).unwrap(),
        fs::read(single.join("checkpoint.json")).unwrap()
    );
    let sweep = read_csv(&sweep_dir.join("sweep.csv"));
    let eval = read_csv(&single.join("evaluation.csv"));
    assert_eq!(sweep.len(), eval.len());
    for (s_row, e_row) in sweep[1..].iter().zip(&eval[1..]) {
        assert_eq!(s_row[..3], ["0", "2", "ok"]);
        assert_eq!(s_row[3..], e_row[..]);
    }
}

#[test]
fn toy_sweep_small_k_prefers_harder_sampling() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hns(&["--threads", "1", "sweep", "--config", s(&toy_config()), "--set", "eval.ks=[5, 50]", "--out", s(dir.path())]));
    let best = read_csv(&dir.path().join("sweep_best.csv"));
    assert_eq!(best[0], ["metric", "param", "best_value", "score"]);
    let argmax = |k: &str| -> usize {
        best.iter().find(|r| r[0] == "ndcg" && r[1] == k).unwrap()[2].parse().unwrap()
    };
    assert!(argmax("5") <= argmax("50"), "{best:?}");
    let rows = read_csv(&dir.path().join("sweep.csv"));
    // 5 points x (3 Top-K metrics x 2 K, AUC, raw and normalized partial AUC at 2 betas)
    assert_eq!(rows.len() - 1, 5 * (6 + 1 + 4));
}

#[test]
fn sweep_records_failed_points_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let out = hns(&[
        "--threads", "1", "sweep", "--config", s(&toy_config()), "--set", "train.epochs=2",
        "--grid", "sampler.M=1,500,2", "--out", s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let rows = read_csv(&dir.path().join("sweep.csv"));
    let statuses: Vec<(&str, &str)> = rows[1..].iter().map(|r| (r[1].as_str(), r[2].as_str())).collect();
    assert!(statuses.contains(&("1", "ok")));
    assert!(statuses.contains(&("500", "config_error")));
    assert!(statuses.contains(&("2", "ok")));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    assert!(report["points"][1]["error"].as_str().unwrap().contains("M"));
    assert!(dir.path().join("manifest.json").is_file());
}

#[test]
fn verify_bounds_reports_zero_violations() {
    let out = hns(&["verify-bounds", "--max-n-plus", "4", "--max-n-minus", "6"]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("\n0 violations"));
}

#[test]
fn simulate_correlation_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hns(&[
        "simulate", "correlation", "--config", s(&crate_dir().join("configs/correlation.toml")),
        "--set", "simulate.correlation.trials=300", "--set", "simulate.correlation.beta_points=6",
        "--out", s(dir.path()),
    ]));
    let curves = read_csv(&dir.path().join("correlation.csv"));
    assert_eq!(curves[0], ["metric", "k", "beta", "correlation"]);
    assert_eq!(curves.len() - 1, 3 * 3 * 6);
    let summary = read_csv(&dir.path().join("correlation_summary.csv"));
    assert_eq!(summary[0], ["metric", "k", "peak", "argmax_beta", "auc_correlation"]);
    assert_eq!(summary.len() - 1, 9);
    for r in &summary[1..] {
        let peak: f64 = r[2].parse().unwrap();
        let at_auc: f64 = r[4].parse().unwrap();
        assert!(peak >= at_auc);
    }
    assert!(dir.path().join("correlation.json").is_file());
}

#[test]
fn simulate_sampling_orders_dns_by_m() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hns(&[
        "simulate", "sampling", "--config", s(&crate_dir().join("configs/sampling.toml")),
        "--set", "simulate.sampling.draws=3000", "--out", s(dir.path()),
    ]));
    let rows = read_csv(&dir.path().join("sampling.csv"));
    assert_eq!(rows[0], ["sampler", "rank", "probability", "cumulative"]);
    let cdf = |label: &str, rank: usize| -> f64 {
        rows.iter().find(|r| r[0] == label && r[1] == rank.to_string()).unwrap()[3].parse().unwrap()
    };
    for rank in [10, 50, 100] {
        assert!(cdf("DNS(1,100)", rank) + 0.02 >= cdf("DNS(5,100)", rank));
        assert!(cdf("DNS(5,100)", rank) + 0.02 >= cdf("DNS(20,100)", rank));
    }
    assert!((cdf("DNS(1,100)", 1000) - 1.0).abs() < 1e-9);
}

#[test]
fn simulate_sampling_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    train_toy(dir.path(), &["--set", "train.epochs=2"]);
    let out_dir = dir.path().join("sampling");
    ok(&hns(&[
        "simulate", "sampling", "--config", s(&toy_config()),
        "--set", &format!("simulate.sampling.checkpoint={:?}", s(&dir.path().join("checkpoint.json"))),
        "--set", "simulate.sampling.draws=200",
        "--set", "simulate.sampling.samplers=[{kind=\"dns\", M=2, N=20}, {kind=\"popularity\", N=20}]",
        "--out", s(&out_dir),
    ]));
    let rows = read_csv(&out_dir.join("sampling.csv"));
    let labels: std::collections::BTreeSet<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(labels.into_iter().collect::<Vec<_>>(), ["DNS(2,20)", "Popularity(20)"]);
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn csv_headers_match_golden() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    train_toy(&d.join("train"), &["--set", "train.epochs=2", "--set", "train.eval_every=1"]);
    ok(&hns(&["evaluate", "--checkpoint", s(&d.join("train/checkpoint.json"))]));
    ok(&hns(&[
        "sweep", "--config", s(&toy_config()), "--set", "train.epochs=1", "--grid", "sampler.M=1", "--out", s(&d.join("sweep")),
    ]));
    ok(&hns(&[
        "simulate", "correlation", "--set", "simulate.correlation.trials=20", "--set", "simulate.correlation.n_plus=5",
        "--set", "simulate.correlation.n_minus=20", "--set", "simulate.correlation.ks=[5]", "--out", s(&d.join("corr")),
    ]));
    ok(&hns(&["simulate", "sampling", "--set", "simulate.sampling.draws=10", "--out", s(&d.join("samp"))]));
    let files = [
        "train/train_log.csv",
        "train/valid_metrics.csv",
        "train/evaluation.csv",
        "sweep/sweep.csv",
        "sweep/sweep_best.csv",
        "corr/correlation.csv",
        "corr/correlation_summary.csv",
        "samp/sampling.csv",
    ];
    let actual: String = files.iter().map(|f| format!("{f}: {}\n", header(&d.join(f)))).collect();
    let golden = crate_dir().join("tests/golden/csv_headers.txt");
    if std::env::var_os("HNS_BLESS").is_some() {
        fs::write(&golden, &actual).unwrap();
    }
    assert_eq!(actual, fs::read_to_string(golden).unwrap());
}
