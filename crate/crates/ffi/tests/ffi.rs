use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use gad_ffi::*;

fn last_error() -> String {
    let p = gad_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn path_graph() -> *mut GadGraph {
    // 0 - 1 - 2 - 3, node 0 anomalous, node 3 unknown.
    let edges: [usize; 6] = [0, 1, 1, 2, 2, 3];
    let features = [1.0, 0.0, 0.5, 0.5, 0.0, 1.0, 0.2, 0.8];
    let labels: [i8; 4] = [1, 0, 1, -1];
    let mut g = ptr::null_mut();
    let status = unsafe {
        gad_graph_from_arrays(4, edges.as_ptr(), 3, features.as_ptr(), 2, labels.as_ptr(), &mut g)
    };
    assert_eq!(status, GadStatus::Ok);
    g
}

#[test]
fn graph_round_trip_and_stats() {
    let g = path_graph();
    let mut stats = GadGraphStats::default();
    assert_eq!(unsafe { gad_graph_stats(g, &mut stats) }, GadStatus::Ok);
    assert_eq!(stats.num_nodes, 4);
    assert_eq!(stats.num_edges, 3);
    assert!((stats.avg_degree - 1.5).abs() < 1e-15);
    assert!((stats.density - 0.5).abs() < 1e-15);
    unsafe { gad_graph_free(g) };
    unsafe { gad_graph_free(ptr::null_mut()) };
}

#[test]
fn reachable_ratio_matches_core() {
    let g = path_graph();
    let mut r = [0.0; 3];
    let status = unsafe { gad_reachable_ratio(g, [0usize].as_ptr(), 1, [2usize, 3].as_ptr(), 2, 3, r.as_mut_ptr()) };
    assert_eq!(status, GadStatus::Ok);
    assert_eq!(r, [0.0, 0.5, 1.0]);
    let status = unsafe { gad_reachable_ratio(g, ptr::null(), 0, [2usize].as_ptr(), 1, 3, r.as_mut_ptr()) };
    assert_eq!(status, GadStatus::InvalidArgument);
    assert!(last_error().contains("labeled"), "{}", last_error());
    unsafe { gad_graph_free(g) };
}

#[test]
fn metrics() {
    let scores = [0.9, 0.8, 0.1, 0.8];
    let labels = [1u8, 0, 0, 1];
    let (mut roc, mut ap) = (0.0, 0.0);
    assert_eq!(unsafe { gad_auroc(scores.as_ptr(), labels.as_ptr(), 4, &mut roc) }, GadStatus::Ok);
    assert_eq!(unsafe { gad_auprc(scores.as_ptr(), labels.as_ptr(), 4, &mut ap) }, GadStatus::Ok);
    assert!((roc - 0.875).abs() < 1e-15);
    // Tie group {0.8} holds one hit: AP = 0.5·1 + 0.5·(2/3).
    assert!((ap - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
    let only_pos = [1u8; 4];
    assert_eq!(
        unsafe { gad_auroc(scores.as_ptr(), only_pos.as_ptr(), 4, &mut roc) },
        GadStatus::InvalidArgument
    );
}

#[test]
fn null_pointers_and_bad_labels_are_reported() {
    let mut g = ptr::null_mut();
    let status = unsafe { gad_graph_from_arrays(2, ptr::null(), 1, ptr::null(), 0, ptr::null(), &mut g) };
    assert_eq!(status, GadStatus::NullPointer);
    assert!(last_error().contains("edges"));
    let labels: [i8; 1] = [7];
    let status = unsafe { gad_graph_from_arrays(1, ptr::null(), 0, ptr::null(), 0, labels.as_ptr(), &mut g) };
    assert_eq!(status, GadStatus::InvalidArgument);
    assert!(g.is_null());
    assert_eq!(unsafe { gad_graph_stats(ptr::null(), ptr::null_mut()) }, GadStatus::NullPointer);
}

#[test]
fn load_reports_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e.txt");
    let f = dir.path().join("f.csv");
    let l = dir.path().join("l.txt");
    std::fs::write(&e, "0 1\n").unwrap();
    std::fs::write(&f, "1.0\n2.0\n").unwrap();
    std::fs::write(&l, "0\nx\n").unwrap();
    let c = |p: &Path| CString::new(p.to_str().unwrap()).unwrap();
    let mut g = ptr::null_mut();
    let status = unsafe { gad_graph_load(c(&e).as_ptr(), c(&f).as_ptr(), c(&l).as_ptr(), &mut g) };
    assert_eq!(status, GadStatus::Parse);
    assert!(last_error().contains("l.txt:2"), "{}", last_error());
    std::fs::write(&l, "0\n1\n").unwrap();
    let status = unsafe { gad_graph_load(c(&e).as_ptr(), c(&f).as_ptr(), c(&l).as_ptr(), &mut g) };
    assert_eq!(status, GadStatus::Ok);
    unsafe { gad_graph_free(g) };
    let missing = CString::new("/nonexistent/edges").unwrap();
    let status = unsafe { gad_graph_load(missing.as_ptr(), c(&f).as_ptr(), c(&l).as_ptr(), &mut g) };
    assert_eq!(status, GadStatus::Io);
}

#[test]
fn synthetic_graph_has_requested_size() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { gad_graph_synthetic(200, 1, 0, &mut g) }, GadStatus::Ok);
    let mut stats = GadGraphStats::default();
    assert_eq!(unsafe { gad_graph_stats(g, &mut stats) }, GadStatus::Ok);
    assert_eq!(stats.num_nodes, 200);
    unsafe { gad_graph_free(g) };
}

#[test]
fn experiment_from_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "dataset": {"kind": "synthetic", "num_nodes": 300, "p_in": 0.05, "p_out": 0.002, "anomaly_fraction": 0.15, "seed": 2},
        "paradigm": "end2end",
        "hidden_dim": 8,
        "epochs": 10,
        "trials": 1,
        "split": {"kind": "semi", "n_anom": 5, "n_norm": 20},
        "out_dir": dir.path(),
    });
    let text = CString::new(cfg.to_string()).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { gad_run_experiment(text.as_ptr(), &mut out) }, GadStatus::Ok);
    let json = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
    unsafe { gad_string_free(out) };
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["trials_completed"], 1);
    let auroc = v["metrics"]["test_auroc"]["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auroc));

    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { gad_run_experiment(bad.as_ptr(), &mut out) }, GadStatus::Parse);
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/gad.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "gad_last_error",
        "gad_graph_from_arrays",
        "gad_graph_load",
        "gad_graph_synthetic",
        "gad_graph_free",
        "gad_graph_stats",
        "gad_reachable_ratio",
        "gad_auroc",
        "gad_auprc",
        "gad_run_experiment",
        "gad_string_free",
        "typedef struct GadGraph GadGraph;",
        "GAD_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("no C compiler found; skipped syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
