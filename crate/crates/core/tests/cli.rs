use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gad_core::graphlevel::GraphCollection;
use gad_core::{Graph, Label, Matrix};

fn gad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gad")).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &[&str] = &["--nodes", "800", "--synthetic-seed", "2", "--n-anom", "3", "--n-norm", "20"];

#[test]
fn gen_synthetic_then_run_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&gad(&["gen-synthetic", "--nodes", "800", "--synthetic-seed", "2", "--out", p(&data)]));
    for f in ["edges.txt", "features.csv", "labels.txt"] {
        assert!(data.join(f).exists());
    }
    let out = dir.path().join("out");
    let stdout = ok(&gad(&[
        "run",
        "--edges",
        p(&data.join("edges.txt")),
        "--features",
        p(&data.join("features.csv")),
        "--labels",
        p(&data.join("labels.txt")),
        "--paradigm",
        "end2end",
        "--trials",
        "2",
        "--epochs",
        "10",
        "--hidden",
        "8",
        "--n-anom",
        "3",
        "--n-norm",
        "20",
        "--out",
        p(&out),
    ]));
    assert!(stdout.contains("\"trials_completed\": 2"), "{stdout}");
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"dataset": {"kind": "synthetic", "num_nodes": 800, "seed": 2}, "paradigm": "graphmae",
            "hidden_dim": 8, "epochs": 10, "pretrain_epochs": 5, "trials": 3,
            "split": {"kind": "semi", "n_anom": 3, "n_norm": 20}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let stdout = ok(&gad(&["run", "--config", p(&cfg), "--trials", "1", "--out", p(&out)]));
    assert!(stdout.contains("\"trials_requested\": 1"), "{stdout}");
    let hash_dirs: Vec<_> = fs::read_dir(&out).unwrap().collect();
    assert_eq!(hash_dirs.len(), 1);
    let hash_dir = hash_dirs[0].as_ref().unwrap().path();
    let written = fs::read_to_string(hash_dir.join("config.json")).unwrap();
    assert!(written.contains("graphmae"));
}

#[test]
fn ablation_and_sweep_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["ablate-shuffle", "--ratios", "0.5,1.0", "--trials", "1", "--epochs", "10"];
    args.extend(["--pretrain-epochs", "5", "--hidden", "8", "--out", p(dir.path())]);
    args.extend(SMALL);
    ok(&gad(&args));
    let csv = fs::read_to_string(dir.path().join("ablation_shuffle.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let mut args = vec!["sweep-labels", "--counts", "1,2", "--paradigm", "end2end", "--trials", "1"];
    args.extend(["--epochs", "10", "--hidden", "8", "--out", p(dir.path())]);
    args.extend(SMALL);
    ok(&gad(&args));
    let csv = fs::read_to_string(dir.path().join("sweep_labels.csv")).unwrap();
    assert!(csv.starts_with("count,mean_test_auroc,mean_r2"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn grid_prints_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["grid", "--grid-lr", "0.01,0.005", "--paradigm", "end2end", "--trials", "1"];
    args.extend(["--epochs", "10", "--hidden", "8", "--out", p(dir.path())]);
    args.extend(SMALL);
    let stdout = ok(&gad(&args));
    assert!(stdout.contains("selected point"), "{stdout}");
}

#[test]
fn diagnose_prints_reachability() {
    let stdout = ok(&gad(&["diagnose", "--nodes", "800", "--n-anom", "5", "--n-norm", "20", "--max-k", "3"]));
    let v: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let r = v["R"].as_array().unwrap();
    assert_eq!(r.len(), 3);
    assert!(v["density_class"]["kind"].is_string());
}

#[test]
fn graph_level_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let clique = |n: usize| -> Vec<(usize, usize)> {
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
    };
    let path = |n: usize| -> Vec<(usize, usize)> { (1..n).map(|i| (i - 1, i)).collect() };
    let mut graphs = Vec::new();
    let mut classes = Vec::new();
    for i in 0..60 {
        let (edges, class) = if i % 2 == 0 { (clique(6), 0) } else { (path(6), 1) };
        graphs.push(Graph::build(&edges, Matrix::filled(6, 2, 1.0), vec![Label::Unknown; 6]).unwrap());
        classes.push(class);
    }
    let manifest = GraphCollection::new(graphs, classes).unwrap().save_manifest(dir.path()).unwrap();
    let out = dir.path().join("out");
    let stdout = ok(&gad(&[
        "graph-level",
        "--manifest",
        p(&manifest),
        "--paradigm",
        "end2end",
        "--train-ratio",
        "0.2",
        "--keep-fraction",
        "0.5",
        "--trials",
        "2",
        "--epochs",
        "30",
        "--hidden",
        "8",
        "--out",
        p(&out),
    ]));
    assert!(stdout.contains("trial 1"), "{stdout}");
    let csv = fs::read_to_string(out.join("graph_level.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn errors_exit_nonzero() {
    let out = gad(&["run", "--edges", "/nonexistent/e.txt", "--features", "/x", "--labels", "/y"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = gad(&["run", "--nodes", "800", "--n-anom", "500"]);
    assert!(!out.status.success());
    assert!(!gad(&["frobnicate"]).status.success());
}
