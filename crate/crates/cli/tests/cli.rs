use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn clustseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clustseg")).args(args).output().expect("spawn clustseg")
}

fn ok(args: &[&str]) {
    let out = clustseg(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: PathBuf) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

fn simulate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["simulate", "--K", "3", "--S", "2", "--I", "20", "--T", "40", "--seed", "3", "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn simulate_writes_panel_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate(&a, &[]);
    simulate(&b, &[]);
    for f in ["observations.csv", "covariates.csv", "labels.csv", "truth.json"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert!(!x.is_empty(), "{f} empty");
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f} differs between identical runs");
    }
    assert_eq!(csv_rows(a.join("observations.csv")).len(), 20 * 40);
    let manifest = read_json(a.join("manifest.json"));
    assert_eq!(manifest["seed"], 3);
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|o| o == "truth.json"));
}

#[test]
fn zero_coefficient_scale_gives_zero_coefficients() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), &["--sigma-alpha", "0"]);
    let truth = read_json(tmp.path().join("truth.json"));
    let alpha = &truth["params"]["alpha"];
    let all: Vec<f64> = flatten(alpha);
    assert!(!all.is_empty());
    assert!(all.iter().all(|&a| a == 0.0));
}

fn flatten(v: &Value) -> Vec<f64> {
    match v {
        Value::Number(n) => vec![n.as_f64().unwrap()],
        Value::Array(a) => a.iter().flat_map(flatten).collect(),
        Value::Object(o) => o.values().flat_map(flatten).collect(),
        _ => vec![],
    }
}

#[test]
fn fit_trace_is_non_decreasing_and_counts_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &[]);
    let out = tmp.path().join("fit");
    ok(&["fit", "--data", p(&data), "--K", "5", "--S", "2", "--pipeline", "clust_seg", "--out", p(&out)]);
    let summary = read_json(out.join("summary.json"));
    // K=5, S=2, D=1, no covariates on the segment stage
    assert_eq!(summary["n_params"], 34);

    let out = tmp.path().join("fit_proposed");
    ok(&["fit", "--data", p(&data), "--K", "3", "--S", "2", "--out", p(&out)]);
    let trace: Vec<f64> = csv_rows(out.join("trace.csv")).iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(trace.len() >= 2);
    for w in trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-6 * w[0].abs().max(1.0), "trace decreased: {} -> {}", w[0], w[1]);
    }
    for f in ["params.json", "partition_clusters.csv", "partition_segments.csv", "responsibilities.csv", "coefficients.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}

#[test]
fn errors_are_json_with_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing");
    let out = clustseg(&["fit", "--data", p(&missing), "--K", "2", "--S", "2", "--out", p(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert!(err["error"]["kind"].is_string());
    assert!(err["error"]["message"].is_string());

    let data = tmp.path().join("data");
    simulate(&data, &[]);
    let out = clustseg(&["fit", "--data", p(&data), "--K", "0", "--S", "2", "--out", p(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert!(err["error"]["message"].is_string());
}

#[test]
fn crossval_folds_partition_individuals() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &[]);
    let out = tmp.path().join("cv");
    ok(&[
        "crossval", "--data", p(&data), "--K", "3", "--S", "2", "--folds", "4", "--kinds", "clust_seg,proposed", "--max-iterations", "20", "--out", p(&out),
    ]);
    let folds = csv_rows(out.join("folds.csv"));
    assert_eq!(folds.len(), 20);
    let mut ids: Vec<&str> = folds.iter().map(|r| r[0].as_str()).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 20);
    let mut sizes = [0usize; 4];
    for r in &folds {
        sizes[r[1].parse::<usize>().unwrap()] += 1;
    }
    assert_eq!(sizes, [5, 5, 5, 5]);
    let runs = csv_rows(out.join("cv_runs.csv"));
    assert_eq!(runs.len(), 8);
    let summary = read_json(out.join("summary.json"));
    assert_eq!(summary.as_array().unwrap().len(), 2);
}

#[test]
fn preprocess_drops_sparse_and_quiet_stations() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/ridership");
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "preprocess",
        "--records",
        p(&fixtures.join("records.csv")),
        "--config",
        p(&fixtures.join("config.toml")),
        "--out",
        p(tmp.path()),
    ]);
    let dropped: Vec<String> = csv_rows(tmp.path().join("dropped.csv")).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(dropped, ["B", "D"]);
    let summary = read_json(tmp.path().join("summary.json"));
    assert_eq!(summary["stations_kept"], 3);
    assert_eq!(summary["days"], 20);
}

#[test]
fn select_k_writes_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    simulate(&data, &[]);
    let out = tmp.path().join("sk");
    ok(&["select-k", "--data", p(&data), "--S", "2", "--k-min", "1", "--k-max", "4", "--max-iterations", "30", "--out", p(&out)]);
    assert_eq!(csv_rows(out.join("curve.csv")).len(), 4);
    let sel = read_json(out.join("selection.json"));
    let k = sel["selected_k"].as_u64().unwrap();
    assert!((1..=4).contains(&k));
}
