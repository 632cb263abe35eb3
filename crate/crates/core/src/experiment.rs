//! Multi-trial experiment runner: configuration, per-trial training and
//! evaluation, aggregation, grid search, and the two sweeps.
//!
//! Output layout for one configuration:
//!
//! ```text
//! <out_dir>/<config_hash>/config.json
//! <out_dir>/<config_hash>/aggregate.json
//! <out_dir>/<config_hash>/trial_<t>/{scores.csv, losses.csv, reachability.json, result.json}
//! ```
//!
//! Nothing written depends on timing or thread scheduling.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Activation;
use crate::data::{
    generate_synthetic, load_dataset, make_full_split, make_semi_split, SemiSplitParams, SplitSpec,
    SyntheticSpec,
};
use crate::detector::{
    end2end_run, finetune_run, score_embeddings, validation_metrics, ClassifierState, TrainParams,
};
use crate::diagnostics::{k_hop_reachable_ratio, ReachabilityReport};
use crate::encoders::{EncoderConfig, EncoderKind};
use crate::io_util::{fmt_f64, write_csv_atomic, write_json_atomic};
use crate::metrics::{auprc, auroc, hop_avg_rank, normalized_ranks, BucketRank, HopBucket, LabeledScores};
use crate::pretrain::{pretrain_run, DgiConfig, MaeConfig, Objective};
use crate::{Error, Graph, Label, Matrix, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Files {
        edges: PathBuf,
        features: PathBuf,
        labels: PathBuf,
    },
}

impl DatasetSource {
    pub fn load(&self) -> Result<Graph> {
        match self {
            DatasetSource::Synthetic(spec) => generate_synthetic(spec),
            DatasetSource::Files {
                edges,
                features,
                labels,
            } => load_dataset(edges, features, labels),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Paradigm {
    Dgi,
    #[serde(rename = "graphmae")]
    GraphMae,
    #[serde(rename = "end2end")]
    End2End,
}

impl Paradigm {
    pub fn name(self) -> &'static str {
        match self {
            Paradigm::Dgi => "dgi",
            Paradigm::GraphMae => "graphmae",
            Paradigm::End2End => "end2end",
        }
    }
}

impl std::str::FromStr for Paradigm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dgi" => Ok(Paradigm::Dgi),
            "graphmae" => Ok(Paradigm::GraphMae),
            "end2end" => Ok(Paradigm::End2End),
            other => Err(Error::InvalidParameter(format!("unknown paradigm {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SplitRegime {
    Semi { n_anom: usize, n_norm: usize },
    Full { ratio: f64 },
}

impl SplitRegime {
    pub fn make(&self, graph: &Graph, seed: u64) -> Result<SplitSpec> {
        match *self {
            SplitRegime::Semi { n_anom, n_norm } => {
                make_semi_split(graph, SemiSplitParams::with_train(n_anom, n_norm), seed)
            }
            SplitRegime::Full { ratio } => make_full_split(graph, ratio, seed),
        }
    }
}

/// Search space for grid search. An empty axis keeps the base config's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub encoder: Vec<EncoderKind>,
    pub lr: Vec<f64>,
    pub hidden_dim: Vec<usize>,
    pub num_layers: Vec<usize>,
    pub activation: Vec<Activation>,
    /// Permit values outside the declared search space.
    pub override_search_space: bool,
}

pub const SEARCH_LR: [f64; 3] = [0.01, 0.005, 0.001];
pub const SEARCH_HIDDEN: [usize; 2] = [32, 64];
pub const SEARCH_LAYERS: [usize; 3] = [1, 2, 3];
pub const SEARCH_ACTIVATION: [Activation; 3] =
    [Activation::Relu, Activation::LeakyRelu, Activation::Tanh];

impl Grid {
    /// The full declared search space over both backbones.
    pub fn search_space() -> Self {
        Self {
            encoder: vec![EncoderKind::Gcn, EncoderKind::Gin],
            lr: SEARCH_LR.to_vec(),
            hidden_dim: SEARCH_HIDDEN.to_vec(),
            num_layers: SEARCH_LAYERS.to_vec(),
            activation: SEARCH_ACTIVATION.to_vec(),
            override_search_space: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.override_search_space {
            return Ok(());
        }
        let off = |what: &str, v: String| {
            Err(Error::InvalidParameter(format!(
                "grid {what} {v} is outside the search space (set override_search_space)"
            )))
        };
        if let Some(v) = self.lr.iter().find(|v| !SEARCH_LR.contains(v)) {
            return off("lr", v.to_string());
        }
        if let Some(v) = self.hidden_dim.iter().find(|v| !SEARCH_HIDDEN.contains(v)) {
            return off("hidden_dim", v.to_string());
        }
        if let Some(v) = self.num_layers.iter().find(|v| !SEARCH_LAYERS.contains(v)) {
            return off("num_layers", v.to_string());
        }
        if let Some(v) = self.activation.iter().find(|v| !SEARCH_ACTIVATION.contains(v)) {
            return off("activation", format!("{v:?}"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub paradigm: Paradigm,
    pub encoder: EncoderKind,
    pub num_layers: usize,
    pub hidden_dim: usize,
    /// `None` picks PReLU under DGI and ReLU otherwise.
    pub activation: Option<Activation>,
    pub split: SplitRegime,
    /// Fine-tuning epochs, or training epochs for end-to-end.
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub lr: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub shuffle_ratio: f64,
    pub mask_ratio: f64,
    pub gamma: f64,
    /// Largest hop for the reachability report.
    pub max_k: usize,
    pub grid: Option<Grid>,
    /// Not part of the config hash.
    pub out_dir: PathBuf,
    /// Concurrent trials; 0 uses every core. Not part of the config hash.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Synthetic(SyntheticSpec::default()),
            paradigm: Paradigm::Dgi,
            encoder: EncoderKind::Gcn,
            num_layers: 2,
            hidden_dim: 32,
            activation: None,
            split: SplitRegime::Semi {
                n_anom: 20,
                n_norm: 80,
            },
            epochs: 200,
            pretrain_epochs: 200,
            lr: 0.005,
            trials: 10,
            base_seed: 0,
            shuffle_ratio: 1.0,
            mask_ratio: 0.5,
            gamma: 2.0,
            max_k: 3,
            grid: None,
            out_dir: PathBuf::from("results"),
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.trials == 0 || self.epochs == 0 || self.pretrain_epochs == 0 {
            return bad("trials, epochs and pretrain_epochs must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.shuffle_ratio) {
            return bad(format!("shuffle ratio {} outside [0, 1]", self.shuffle_ratio));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio <= 1.0) {
            return bad(format!("mask ratio {} outside (0, 1]", self.mask_ratio));
        }
        if !(self.gamma >= 1.0) {
            return bad(format!("gamma {} below 1", self.gamma));
        }
        if self.max_k == 0 {
            return bad("max_k must be at least 1".into());
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        if let Some(grid) = &self.grid {
            grid.validate()?;
        }
        self.encoder_config(1).validate()
    }

    pub fn resolved_activation(&self) -> Activation {
        self.activation.unwrap_or(match self.paradigm {
            Paradigm::Dgi => Activation::Prelu,
            _ => Activation::Relu,
        })
    }

    pub fn encoder_config(&self, input_dim: usize) -> EncoderConfig {
        EncoderConfig {
            kind: self.encoder,
            num_layers: self.num_layers,
            hidden_dim: self.hidden_dim,
            activation: self.resolved_activation(),
            input_dim,
        }
    }

    /// Pretext objective; `None` for end-to-end.
    pub fn objective(&self) -> Option<Objective> {
        match self.paradigm {
            Paradigm::Dgi => Some(Objective::Dgi(DgiConfig {
                shuffle_ratio: self.shuffle_ratio,
            })),
            Paradigm::GraphMae => Some(Objective::GraphMae(MaeConfig {
                mask_ratio: self.mask_ratio,
                gamma: self.gamma,
            })),
            Paradigm::End2End => None,
        }
    }

    /// The config as JSON with sorted keys, without `out_dir` and `workers`.
    pub fn canonical_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("out_dir");
            map.remove("workers");
        }
        Ok(serde_json::to_string(&value)?)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn config_hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.canonical_json()?.as_bytes());
        Ok(hex::encode(&digest[..8]))
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub config_hash: String,
    pub test_auroc: f64,
    pub test_auprc: f64,
    pub val_auprc: Option<f64>,
    pub val_auroc: Option<f64>,
    /// 1-based epoch of the retained checkpoint.
    pub best_epoch: usize,
    pub n_test: usize,
    pub n_test_anomalies: usize,
    /// Mean normalized rank of test anomalies per hop bucket.
    pub hop_ranks: BTreeMap<HopBucket, BucketRank>,
    /// Mean normalized rank of test anomalies at 3 or more hops, or
    /// unreachable.
    pub far_rank: Option<f64>,
    #[serde(rename = "R")]
    pub reachability: Vec<f64>,
    pub pretrain_loss_first: Option<f64>,
    pub pretrain_loss_last: Option<f64>,
    /// Seconds; logged but never written, so result files stay reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub config_hash: String,
    pub trials_requested: usize,
    pub trials_completed: usize,
    pub failures: Vec<TrialFailure>,
    pub metrics: BTreeMap<String, MeanStd>,
}

impl Aggregate {
    pub fn from_trials(
        config_hash: &str,
        requested: usize,
        trials: &[TrialResult],
        failures: Vec<TrialFailure>,
    ) -> Self {
        let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut push = |k: String, v: Option<f64>| {
            if let Some(v) = v {
                columns.entry(k).or_default().push(v);
            }
        };
        for t in trials {
            push("test_auroc".into(), Some(t.test_auroc));
            push("test_auprc".into(), Some(t.test_auprc));
            push("val_auprc".into(), t.val_auprc);
            push("val_auroc".into(), t.val_auroc);
            push("far_rank".into(), t.far_rank);
            push("pretrain_loss_first".into(), t.pretrain_loss_first);
            push("pretrain_loss_last".into(), t.pretrain_loss_last);
            for (k, r) in t.reachability.iter().enumerate() {
                push(format!("R_{}", k + 1), Some(*r));
            }
            for (bucket, rank) in &t.hop_ranks {
                push(format!("hop_rank_{}", bucket.name()), Some(rank.mean));
            }
        }
        let metrics = columns
            .into_iter()
            .filter_map(|(k, v)| MeanStd::of(&v).map(|m| (k, m)))
            .collect();
        Self {
            config_hash: config_hash.to_string(),
            trials_requested: requested,
            trials_completed: trials.len(),
            failures,
            metrics,
        }
    }

    pub fn mean(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).map(|m| m.mean)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub config_hash: String,
    pub dir: PathBuf,
    pub trials: Vec<TrialResult>,
    pub aggregate: Aggregate,
}

impl ExperimentOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.aggregate.failures.is_empty()
    }
}

/// Everything a trained trial knows before the test set is touched.
struct TrainedTrial {
    seed: u64,
    split: SplitSpec,
    classifier: ClassifierState,
    embeddings: Matrix,
    val: Option<(f64, f64)>,
    best_epoch: usize,
    pretrain_losses: Vec<f64>,
    train_losses: Vec<f64>,
}

fn train_trial(cfg: &ExperimentConfig, graph: &Graph, trial: usize) -> Result<TrainedTrial> {
    let seed = cfg.trial_seed(trial);
    let split = cfg.split.make(graph, seed)?;
    let enc_cfg = cfg.encoder_config(graph.feature_dim());
    let params = TrainParams::new(cfg.epochs, cfg.lr, seed);
    let (classifier, embeddings, val_scores, best_epoch, pretrain_losses, train_losses) =
        match cfg.objective() {
            Some(objective) => {
                let pre = pretrain_run(graph, enc_cfg, &objective, cfg.pretrain_epochs, cfg.lr, seed)?;
                let ft = finetune_run(&pre.encoder, graph, &split, &params)?;
                (ft.classifier, ft.embeddings, ft.val_scores, ft.best_epoch, pre.losses, ft.losses)
            }
            None => {
                let e2e = end2end_run(enc_cfg, graph, &split, &params)?;
                (e2e.classifier, e2e.embeddings, e2e.val_scores, e2e.best_epoch, Vec::new(), e2e.losses)
            }
        };
    let val = validation_metrics(&split, &val_scores)?;
    Ok(TrainedTrial {
        seed,
        split,
        classifier,
        embeddings,
        val,
        best_epoch,
        pretrain_losses,
        train_losses,
    })
}

struct EvaluatedTrial {
    result: TrialResult,
    test_nodes: Vec<usize>,
    test_logits: Vec<f64>,
    test_probabilities: Vec<f64>,
    test_labels: Vec<bool>,
    report: ReachabilityReport,
}

fn evaluate_trial(
    cfg: &ExperimentConfig,
    graph: &Graph,
    trained: &TrainedTrial,
    trial: usize,
    config_hash: &str,
) -> Result<EvaluatedTrial> {
    let split = &trained.split;
    let scores = score_embeddings(&trained.classifier, &trained.embeddings, &split.test)?;
    let labels: Vec<bool> = split
        .test
        .iter()
        .map(|&v| graph.labels()[v] == Label::Anomaly)
        .collect();
    let ls = LabeledScores::new(scores.logits.clone(), labels.clone())?;
    let test_auroc = auroc(&ls)?;
    let test_auprc = auprc(&ls)?;

    let positions: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let test_anomalies: Vec<usize> = positions.iter().map(|&i| split.test[i]).collect();
    let report = k_hop_reachable_ratio(graph, &split.train_anomalies, &test_anomalies, cfg.max_k)?;
    let anomaly_hops: Vec<(usize, Option<usize>)> =
        positions.iter().copied().zip(report.hops.iter().copied()).collect();
    let hop_ranks = hop_avg_rank(&scores.logits, &anomaly_hops)?;
    let ranks = normalized_ranks(&scores.logits)?;
    let far: Vec<f64> = anomaly_hops
        .iter()
        .filter(|(_, h)| h.map_or(true, |d| d >= 3))
        .map(|&(i, _)| ranks[i])
        .collect();
    let far_rank = (!far.is_empty()).then(|| far.iter().sum::<f64>() / far.len() as f64);

    let result = TrialResult {
        trial,
        seed: trained.seed,
        config_hash: config_hash.to_string(),
        test_auroc,
        test_auprc,
        val_auprc: trained.val.map(|v| v.0),
        val_auroc: trained.val.map(|v| v.1),
        best_epoch: trained.best_epoch,
        n_test: split.test.len(),
        n_test_anomalies: positions.len(),
        hop_ranks,
        far_rank,
        reachability: report.ratios.clone(),
        pretrain_loss_first: trained.pretrain_losses.first().copied(),
        pretrain_loss_last: trained.pretrain_losses.last().copied(),
        wall_time: 0.0,
    };
    Ok(EvaluatedTrial {
        result,
        test_nodes: split.test.clone(),
        test_logits: scores.logits,
        test_probabilities: scores.probabilities,
        test_labels: labels,
        report,
    })
}

fn write_trial(dir: &Path, trained: &TrainedTrial, eval: &EvaluatedTrial) -> Result<()> {
    let scores = (0..eval.test_nodes.len()).map(|i| {
        vec![
            eval.test_nodes[i].to_string(),
            fmt_f64(eval.test_probabilities[i]),
            u8::from(eval.test_labels[i]).to_string(),
            fmt_f64(eval.test_logits[i]),
        ]
    });
    write_csv_atomic(
        &dir.join("scores.csv"),
        &["node_id", "score", "label", "logit"],
        scores,
    )?;
    let stage = if trained.pretrain_losses.is_empty() {
        "train"
    } else {
        "finetune"
    };
    let losses = trained
        .pretrain_losses
        .iter()
        .enumerate()
        .map(|(e, l)| ("pretrain", e, *l))
        .chain(trained.train_losses.iter().enumerate().map(|(e, l)| (stage, e, *l)))
        .map(|(s, e, l)| vec![s.to_string(), (e + 1).to_string(), fmt_f64(l)]);
    write_csv_atomic(&dir.join("losses.csv"), &["stage", "epoch", "loss"], losses)?;
    write_json_atomic(&dir.join("reachability.json"), &eval.report)?;
    write_json_atomic(&dir.join("result.json"), &eval.result)
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

/// Runs `cfg.trials` trials (trial `t` seeded `base_seed + t`) and writes
/// every artifact. Failed trials are recorded in the aggregate; the call
/// errors only when no trial completes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let graph = cfg.dataset.load()?;
    run_experiment_on(cfg, &graph)
}

/// [`run_experiment`] on an already loaded graph, which must be the one
/// `cfg.dataset` describes.
pub fn run_experiment_on(cfg: &ExperimentConfig, graph: &Graph) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let hash = cfg.config_hash()?;
    let dir = cfg.out_dir.join(&hash);
    let outcomes: Vec<Result<TrialResult>> = with_pool(cfg.workers, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let start = Instant::now();
                let trained = train_trial(cfg, graph, t)?;
                let eval = evaluate_trial(cfg, graph, &trained, t, &hash)?;
                write_trial(&dir.join(format!("trial_{t}")), &trained, &eval)?;
                let mut result = eval.result;
                result.wall_time = start.elapsed().as_secs_f64();
                log::info!(
                    "{hash} trial {t}: test AUROC {:.4} AUPRC {:.4} ({:.1}s)",
                    result.test_auroc,
                    result.test_auprc,
                    result.wall_time
                );
                Ok(result)
            })
            .collect()
    })?;
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (t, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => trials.push(r),
            Err(e) => {
                log::warn!("{hash} trial {t} failed: {e}");
                failures.push(TrialFailure {
                    trial: t,
                    seed: cfg.trial_seed(t),
                    error: e.to_string(),
                });
            }
        }
    }
    if trials.is_empty() {
        return Err(Error::AllTrialsFailed(cfg.trials));
    }
    if !failures.is_empty() {
        log::warn!(
            "{hash}: aggregating {} of {} trials",
            trials.len(),
            cfg.trials
        );
    }
    let aggregate = Aggregate::from_trials(&hash, cfg.trials, &trials, failures);
    let canonical: serde_json::Value = serde_json::from_str(&cfg.canonical_json()?)?;
    write_json_atomic(&dir.join("config.json"), &canonical)?;
    write_json_atomic(&dir.join("aggregate.json"), &aggregate)?;
    Ok(ExperimentOutcome {
        config_hash: hash,
        dir,
        trials,
        aggregate,
    })
}

/// Validation-only summary of one grid point; test metrics are never part
/// of it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub val_auprc: Option<f64>,
    pub val_auroc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub encoder: EncoderKind,
    pub lr: f64,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub activation: Activation,
    pub val_auprc: Option<f64>,
    pub val_auroc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct GridSelection {
    pub best_index: usize,
    pub best: ExperimentConfig,
    pub table: Vec<GridRow>,
    /// One line per comparison that changed or kept the incumbent.
    pub trace: Vec<String>,
}

/// Cartesian product of the grid in the order encoder, lr, hidden_dim,
/// num_layers, activation (last varies fastest). Each point has `grid`
/// cleared.
pub fn grid_points(cfg: &ExperimentConfig) -> Result<Vec<ExperimentConfig>> {
    let grid = cfg.grid.clone().unwrap_or_default();
    grid.validate()?;
    let encoders = axis(&grid.encoder, cfg.encoder);
    let lrs = axis(&grid.lr, cfg.lr);
    let hiddens = axis(&grid.hidden_dim, cfg.hidden_dim);
    let layers = axis(&grid.num_layers, cfg.num_layers);
    let acts: Vec<Option<Activation>> = if grid.activation.is_empty() {
        vec![cfg.activation]
    } else {
        grid.activation.iter().copied().map(Some).collect()
    };
    let mut points = Vec::new();
    for &encoder in &encoders {
        for &lr in &lrs {
            for &hidden_dim in &hiddens {
                for &num_layers in &layers {
                    for &activation in &acts {
                        points.push(ExperimentConfig {
                            encoder,
                            lr,
                            hidden_dim,
                            num_layers,
                            activation,
                            grid: None,
                            ..cfg.clone()
                        });
                    }
                }
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    Ok(points)
}

fn axis<T: Clone>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Greater,
        (None, Some(_)) => Ordering::Less,
        (None, None) => Ordering::Equal,
    }
}

/// `Greater` when `a` beats `b`: higher validation AUPRC, then higher
/// validation AUROC, then smaller hidden dim, then fewer layers, then
/// earlier index.
pub fn compare_rows(a: &GridRow, b: &GridRow) -> Ordering {
    cmp_opt(a.val_auprc, b.val_auprc)
        .then(cmp_opt(a.val_auroc, b.val_auroc))
        .then(b.hidden_dim.cmp(&a.hidden_dim))
        .then(b.num_layers.cmp(&a.num_layers))
        .then(b.index.cmp(&a.index))
}

/// Evaluates every grid point with `evaluate` and picks the winner.
pub fn grid_search_with<F>(cfg: &ExperimentConfig, evaluate: F) -> Result<GridSelection>
where
    F: Fn(&ExperimentConfig) -> Result<ValidationSummary>,
{
    let points = grid_points(cfg)?;
    let mut table = Vec::with_capacity(points.len());
    for (index, p) in points.iter().enumerate() {
        let v = evaluate(p)?;
        table.push(GridRow {
            index,
            encoder: p.encoder,
            lr: p.lr,
            hidden_dim: p.hidden_dim,
            num_layers: p.num_layers,
            activation: p.resolved_activation(),
            val_auprc: v.val_auprc,
            val_auroc: v.val_auroc,
        });
    }
    let fmt = |x: Option<f64>| x.map_or("none".to_string(), fmt_f64);
    let mut trace = Vec::new();
    let mut best = 0;
    for row in &table[1..] {
        let wins = compare_rows(row, &table[best]) == Ordering::Greater;
        trace.push(format!(
            "point {} (val_auprc {}, val_auroc {}) vs incumbent {} (val_auprc {}, val_auroc {}): {}",
            row.index,
            fmt(row.val_auprc),
            fmt(row.val_auroc),
            best,
            fmt(table[best].val_auprc),
            fmt(table[best].val_auroc),
            if wins { "replaces" } else { "kept" }
        ));
        if wins {
            best = row.index;
        }
    }
    trace.push(format!("selected point {best}"));
    for line in &trace {
        log::info!("grid: {line}");
    }
    Ok(GridSelection {
        best_index: best,
        best: points[best].clone(),
        table,
        trace,
    })
}

/// Mean validation metrics over the trials of `cfg`, without scoring the
/// test set.
pub fn validation_summary(cfg: &ExperimentConfig, graph: &Graph) -> Result<ValidationSummary> {
    cfg.validate()?;
    let vals: Vec<Result<Option<(f64, f64)>>> = with_pool(cfg.workers, || {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| train_trial(cfg, graph, t).map(|tr| tr.val))
            .collect()
    })?;
    let mut ap = Vec::new();
    let mut roc = Vec::new();
    for v in vals {
        if let Some((a, r)) = v? {
            ap.push(a);
            roc.push(r);
        }
    }
    Ok(ValidationSummary {
        val_auprc: MeanStd::of(&ap).map(|m| m.mean),
        val_auroc: MeanStd::of(&roc).map(|m| m.mean),
    })
}

#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub selection: GridSelection,
    /// Full run of the selected point; the only place test metrics appear.
    pub selected: ExperimentOutcome,
}

/// Exhaustive grid search selected on validation metrics. Writes
/// `grid_<hash>/{grid.csv, selection.txt}` under `out_dir`, then runs the
/// winner with [`run_experiment`].
pub fn grid_search(cfg: &ExperimentConfig) -> Result<GridOutcome> {
    cfg.validate()?;
    let graph = cfg.dataset.load()?;
    let selection = grid_search_with(cfg, |p| validation_summary(p, &graph))?;
    let dir = cfg.out_dir.join(format!("grid_{}", cfg.config_hash()?));
    let fmt = |x: Option<f64>| x.map_or(String::new(), fmt_f64);
    let rows = selection.table.iter().map(|r| {
        vec![
            r.index.to_string(),
            serde_json::to_value(r.encoder).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default(),
            fmt_f64(r.lr),
            r.hidden_dim.to_string(),
            r.num_layers.to_string(),
            serde_json::to_value(r.activation).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default(),
            fmt(r.val_auprc),
            fmt(r.val_auroc),
            u8::from(r.index == selection.best_index).to_string(),
        ]
    });
    write_csv_atomic(
        &dir.join("grid.csv"),
        &[
            "index",
            "encoder",
            "lr",
            "hidden_dim",
            "num_layers",
            "activation",
            "val_auprc",
            "val_auroc",
            "selected",
        ],
        rows,
    )?;
    let mut trace = selection.trace.join("\n");
    trace.push('\n');
    crate::io_util::write_atomic(&dir.join("selection.txt"), trace.as_bytes())?;
    let selected = run_experiment_on(&selection.best, &graph)?;
    Ok(GridOutcome {
        selection,
        selected,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub ratio: f64,
    pub config_hash: String,
    pub trials: usize,
    pub mean_test_auroc: f64,
    pub std_test_auroc: f64,
    pub mean_pretrain_loss_first: f64,
    pub mean_pretrain_loss_last: f64,
    /// Every completed trial ended pretraining below its first-epoch loss.
    pub all_losses_decreased: bool,
}

/// One [`run_experiment`] per shuffle ratio with the same seed schedule.
/// Writes `ablation_shuffle.csv` under `out_dir`.
pub fn ablation_shuffle_ratio(cfg: &ExperimentConfig, ratios: &[f64]) -> Result<Vec<AblationRow>> {
    if cfg.paradigm != Paradigm::Dgi {
        return Err(Error::InvalidParameter(
            "the shuffle-ratio ablation needs the dgi paradigm".into(),
        ));
    }
    if let Some(r) = ratios.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidParameter(format!("shuffle ratio {r} outside [0, 1]")));
    }
    if ratios.is_empty() {
        return Err(Error::EmptyGrid);
    }
    cfg.validate()?;
    let graph = cfg.dataset.load()?;
    let mut rows = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let run_cfg = ExperimentConfig {
            shuffle_ratio: ratio,
            grid: None,
            ..cfg.clone()
        };
        let out = run_experiment_on(&run_cfg, &graph)?;
        let auroc = out.aggregate.metrics["test_auroc"].clone();
        let firsts: Vec<f64> = out.trials.iter().filter_map(|t| t.pretrain_loss_first).collect();
        let lasts: Vec<f64> = out.trials.iter().filter_map(|t| t.pretrain_loss_last).collect();
        let all_losses_decreased = out
            .trials
            .iter()
            .all(|t| matches!((t.pretrain_loss_first, t.pretrain_loss_last), (Some(a), Some(b)) if b < a));
        rows.push(AblationRow {
            ratio,
            config_hash: out.config_hash,
            trials: auroc.n,
            mean_test_auroc: auroc.mean,
            std_test_auroc: auroc.std,
            mean_pretrain_loss_first: MeanStd::of(&firsts).map_or(f64::NAN, |m| m.mean),
            mean_pretrain_loss_last: MeanStd::of(&lasts).map_or(f64::NAN, |m| m.mean),
            all_losses_decreased,
        });
    }
    write_csv_atomic(
        &cfg.out_dir.join("ablation_shuffle.csv"),
        &[
            "ratio",
            "mean_test_auroc",
            "std_test_auroc",
            "trials",
            "mean_pretrain_loss_first",
            "mean_pretrain_loss_last",
            "all_losses_decreased",
            "config_hash",
        ],
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.ratio),
                fmt_f64(r.mean_test_auroc),
                fmt_f64(r.std_test_auroc),
                r.trials.to_string(),
                fmt_f64(r.mean_pretrain_loss_first),
                fmt_f64(r.mean_pretrain_loss_last),
                r.all_losses_decreased.to_string(),
                r.config_hash.clone(),
            ]
        }),
    )?;
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub count: usize,
    pub config_hash: String,
    pub trials: usize,
    pub mean_test_auroc: f64,
    pub mean_r2: f64,
}

/// One [`run_experiment`] per labeled-anomaly count `c` (semi split with
/// `n_anom = c`). `R_2` is measured from the `c` training anomalies to the
/// test anomalies. Writes `sweep_labels.csv` under `out_dir`.
pub fn sweep_labeled_anomalies(cfg: &ExperimentConfig, counts: &[usize]) -> Result<Vec<SweepRow>> {
    let n_norm = match cfg.split {
        SplitRegime::Semi { n_norm, .. } => n_norm,
        SplitRegime::Full { .. } => {
            return Err(Error::InvalidParameter(
                "the labeled-anomaly sweep needs the semi split regime".into(),
            ))
        }
    };
    if counts.is_empty() {
        return Err(Error::EmptyGrid);
    }
    cfg.validate()?;
    let graph = cfg.dataset.load()?;
    let available = graph.nodes_with_label(Label::Anomaly).len();
    let val_anom = SemiSplitParams::default().val_anom;
    for &c in counts {
        // At least one anomaly must remain for the test set.
        if c + val_anom >= available {
            return Err(Error::InsufficientLabels {
                class: "anomalies",
                needed: c + val_anom + 1,
                available,
            });
        }
    }
    let mut rows = Vec::with_capacity(counts.len());
    for &count in counts {
        let run_cfg = ExperimentConfig {
            split: SplitRegime::Semi {
                n_anom: count,
                n_norm,
            },
            max_k: cfg.max_k.max(2),
            grid: None,
            ..cfg.clone()
        };
        let out = run_experiment_on(&run_cfg, &graph)?;
        rows.push(SweepRow {
            count,
            config_hash: out.config_hash.clone(),
            trials: out.trials.len(),
            mean_test_auroc: out.aggregate.metrics["test_auroc"].mean,
            mean_r2: out.aggregate.metrics["R_2"].mean,
        });
    }
    write_csv_atomic(
        &cfg.out_dir.join("sweep_labels.csv"),
        &["count", "mean_test_auroc", "mean_r2", "trials", "config_hash"],
        rows.iter().map(|r| {
            vec![
                r.count.to_string(),
                fmt_f64(r.mean_test_auroc),
                fmt_f64(r.mean_r2),
                r.trials.to_string(),
                r.config_hash.clone(),
            ]
        }),
    )?;
    Ok(rows)
}
