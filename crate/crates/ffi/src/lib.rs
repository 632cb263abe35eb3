//! C ABI over `gad-core`.
//!
//! Conventions: every fallible function returns a [`GadStatus`]; on
//! failure [`gad_last_error`] holds a message for the calling thread.
//! Graphs are opaque handles released with [`gad_graph_free`]; strings
//! returned by the library are released with [`gad_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use gad_core::data::{generate_synthetic, load_dataset, SyntheticSpec};
use gad_core::diagnostics::k_hop_reachable_ratio;
use gad_core::experiment::{run_experiment, ExperimentConfig};
use gad_core::metrics::{auprc, auroc, LabeledScores};
use gad_core::{Error, Graph, Label, Matrix};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GadStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Compute = 5,
    Panic = 6,
}

/// Opaque graph handle.
pub struct GadGraph {
    inner: Graph,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GadGraphStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub density: f64,
    pub avg_degree: f64,
    /// NaN when the graph has no anomalies.
    pub avg_degree_anomaly: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GadStatus {
    match e {
        Error::Io(_) => GadStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => GadStatus::Parse,
        Error::NonFinite(_)
        | Error::NonFiniteLoss { .. }
        | Error::AllTrialsFailed(_)
        | Error::StaleTape
        | Error::ForeignVariable
        | Error::NonScalarLoss(_) => GadStatus::Compute,
        _ => GadStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (GadStatus, String)>) -> GadStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GadStatus::Ok,
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("panic inside gad".into());
            GadStatus::Panic
        }
    }
}

fn core_err(e: Error) -> (GadStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (GadStatus, String) {
    (GadStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (GadStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path(p: *const c_char, what: &str) -> Result<PathBuf, (GadStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (GadStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

fn emit_graph(graph: Graph, out: *mut *mut GadGraph) {
    let handle = Box::new(GadGraph { inner: graph });
    // SAFETY: callers check `out` for null before building the graph.
    unsafe { *out = Box::into_raw(handle) };
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gad_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a graph from `num_edges` pairs in `edges` (length `2 * num_edges`),
/// a row-major `num_nodes x feature_dim` feature array and one label per
/// node (0 normal, 1 anomaly, -1 unknown).
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gad_graph_from_arrays(
    num_nodes: usize,
    edges: *const usize,
    num_edges: usize,
    features: *const f64,
    feature_dim: usize,
    labels: *const i8,
    out: *mut *mut GadGraph,
) -> GadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let e = slice(edges, 2 * num_edges, "edges")?;
        let x = slice(features, num_nodes * feature_dim, "features")?;
        let l = slice(labels, num_nodes, "labels")?;
        let pairs: Vec<(usize, usize)> = e.chunks(2).map(|c| (c[0], c[1])).collect();
        let labels = l
            .iter()
            .map(|&v| match v {
                0 => Ok(Label::Normal),
                1 => Ok(Label::Anomaly),
                -1 => Ok(Label::Unknown),
                other => Err((GadStatus::InvalidArgument, format!("label {other} not in {{0, 1, -1}}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let m = Matrix::new(num_nodes, feature_dim, x.to_vec()).map_err(core_err)?;
        let g = Graph::build(&pairs, m, labels).map_err(core_err)?;
        emit_graph(g, out);
        Ok(())
    })
}

/// Loads the three-file dataset format.
///
/// # Safety
/// Paths must be NUL-terminated UTF-8; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gad_graph_load(
    edge_path: *const c_char,
    feature_path: *const c_char,
    label_path: *const c_char,
    out: *mut *mut GadGraph,
) -> GadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let g = load_dataset(
            &path(edge_path, "edge_path")?,
            &path(feature_path, "feature_path")?,
            &path(label_path, "label_path")?,
        )
        .map_err(core_err)?;
        emit_graph(g, out);
        Ok(())
    })
}

/// Default synthetic benchmark with `num_nodes` nodes; `null_signal != 0`
/// removes all injected signal.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gad_graph_synthetic(
    num_nodes: usize,
    seed: u64,
    null_signal: i32,
    out: *mut *mut GadGraph,
) -> GadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mut spec = SyntheticSpec::sparse(num_nodes, seed);
        if null_signal != 0 {
            spec = spec.null_signal();
        }
        emit_graph(generate_synthetic(&spec).map_err(core_err)?, out);
        Ok(())
    })
}

/// # Safety
/// `graph` must come from this library and not be freed twice. Null is a
/// no-op.
#[no_mangle]
pub unsafe extern "C" fn gad_graph_free(graph: *mut GadGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gad_graph_stats(graph: *const GadGraph, out: *mut GadGraphStats) -> GadStatus {
    guard(|| {
        if graph.is_null() {
            return Err(null("graph"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let s = (*graph).inner.stats().map_err(core_err)?;
        *out = GadGraphStats {
            num_nodes: s.num_nodes,
            num_edges: s.num_edges,
            density: s.density,
            avg_degree: s.avg_degree,
            avg_degree_anomaly: s.avg_degree_anomaly.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Writes `R_1..R_max_k` into `out_ratios` (length `max_k`).
///
/// # Safety
/// Arrays must be valid for their lengths; `graph` must be live.
#[no_mangle]
pub unsafe extern "C" fn gad_reachable_ratio(
    graph: *const GadGraph,
    labeled: *const usize,
    num_labeled: usize,
    unlabeled: *const usize,
    num_unlabeled: usize,
    max_k: usize,
    out_ratios: *mut f64,
) -> GadStatus {
    guard(|| {
        if graph.is_null() {
            return Err(null("graph"));
        }
        if out_ratios.is_null() && max_k > 0 {
            return Err(null("out_ratios"));
        }
        let l = slice(labeled, num_labeled, "labeled")?;
        let u = slice(unlabeled, num_unlabeled, "unlabeled")?;
        let report = k_hop_reachable_ratio(&(*graph).inner, l, u, max_k).map_err(core_err)?;
        std::slice::from_raw_parts_mut(out_ratios, max_k).copy_from_slice(&report.ratios);
        Ok(())
    })
}

unsafe fn labeled_scores(
    scores: *const f64,
    labels: *const u8,
    n: usize,
) -> Result<LabeledScores, (GadStatus, String)> {
    let s = slice(scores, n, "scores")?;
    let l = slice(labels, n, "labels")?;
    LabeledScores::new(s.to_vec(), l.iter().map(|&v| v != 0).collect()).map_err(core_err)
}

/// AUROC of `scores` against binary `labels` (nonzero = anomaly).
///
/// # Safety
/// Arrays must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gad_auroc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> GadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = auroc(&labeled_scores(scores, labels, n)?).map_err(core_err)?;
        Ok(())
    })
}

/// Average precision of `scores` against binary `labels`.
///
/// # Safety
/// As for [`gad_auroc`].
#[no_mangle]
pub unsafe extern "C" fn gad_auprc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> GadStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = auprc(&labeled_scores(scores, labels, n)?).map_err(core_err)?;
        Ok(())
    })
}

/// Runs an experiment from a JSON config and returns the aggregate as a
/// JSON string in `out_json` (free with [`gad_string_free`]).
///
/// # Safety
/// `config_json` must be NUL-terminated UTF-8; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn gad_run_experiment(config_json: *const c_char, out_json: *mut *mut c_char) -> GadStatus {
    guard(|| {
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|_| (GadStatus::InvalidArgument, "config is not UTF-8".to_string()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| (GadStatus::Parse, e.to_string()))?;
        let outcome = run_experiment(&cfg).map_err(core_err)?;
        let json = serde_json::to_string(&outcome.aggregate).map_err(|e| (GadStatus::Compute, e.to_string()))?;
        *out_json = CString::new(json)
            .map_err(|_| (GadStatus::Compute, "aggregate contains NUL".to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library; null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn gad_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
