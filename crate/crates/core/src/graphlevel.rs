//! Graph-level detection: whole graphs are the samples. A collection is
//! built by keeping a small random share of one class as anomalies; graphs
//! are embedded by mean pooling node representations.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Adam, AdamConfig, Tape};
use crate::data::{load_unlabeled, save_unlabeled, SplitSpec};
use crate::detector::{finetune_embeddings, score_embeddings, validation_metrics, ClassifierState, TrainParams};
use crate::encoders::{EncoderConfig, EncoderKind, EncoderState, Propagation};
use crate::metrics::{auprc, auroc, LabeledScores};
use crate::pretrain::{ceil_count, pretrain_graphs, Objective};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Graph, Matrix, Result};

pub const KEEP_FRACTION: f64 = 0.10;
pub const TRAIN_RATIO: f64 = 0.05;

/// Graphs with their original class ids; `labels` exist once a class has
/// been downsampled into anomalies.
#[derive(Clone, Debug)]
pub struct GraphCollection {
    graphs: Vec<Graph>,
    classes: Vec<i64>,
    labels: Option<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub class: i64,
}

/// Collection file: paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub graphs: Vec<ManifestEntry>,
}

impl GraphCollection {
    pub fn new(graphs: Vec<Graph>, classes: Vec<i64>) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::EmptyGraph);
        }
        if graphs.len() != classes.len() {
            return Err(Error::LengthMismatch {
                what: "classes vs graphs",
                expected: graphs.len(),
                found: classes.len(),
            });
        }
        let d = graphs[0].feature_dim();
        if let Some(g) = graphs.iter().find(|g| g.feature_dim() != d) {
            return Err(Error::LengthMismatch {
                what: "feature dimension across graphs",
                expected: d,
                found: g.feature_dim(),
            });
        }
        Ok(Self {
            graphs,
            classes,
            labels: None,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn classes(&self) -> &[i64] {
        &self.classes
    }

    /// `true` = anomaly. `None` before downsampling.
    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn load_manifest(path: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(&fs::read(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut graphs = Vec::with_capacity(manifest.graphs.len());
        let mut classes = Vec::with_capacity(manifest.graphs.len());
        for e in &manifest.graphs {
            graphs.push(load_unlabeled(&base.join(&e.edges), &base.join(&e.features))?);
            classes.push(e.class);
        }
        Self::new(graphs, classes)
    }

    /// Writes `graph_<i>.edges`, `graph_<i>.csv` and `manifest.json` into
    /// `dir`; returns the manifest path.
    pub fn save_manifest(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.len());
        for (i, (g, &class)) in self.graphs.iter().zip(&self.classes).enumerate() {
            let edges = PathBuf::from(format!("graph_{i}.edges"));
            let features = PathBuf::from(format!("graph_{i}.csv"));
            save_unlabeled(g, &dir.join(&edges), &dir.join(&features))?;
            entries.push(ManifestEntry {
                edges,
                features,
                class,
            });
        }
        let path = dir.join("manifest.json");
        crate::io_util::write_json_atomic(&path, &Manifest { graphs: entries })?;
        Ok(path)
    }
}

/// `floor(keep_fraction · count)`, at least 1; representation error within
/// 1e-9 is snapped first so that 0.3 · 10 keeps 3.
pub fn downsample_count(count: usize, keep_fraction: f64) -> usize {
    let raw = keep_fraction * count as f64;
    let nearest = raw.round();
    let k = if (raw - nearest).abs() < 1e-9 {
        nearest
    } else {
        raw.floor()
    };
    (k as usize).clamp(1, count.max(1))
}

/// Keeps a uniform sample of `downsample_count` graphs of `target_class`
/// and labels them anomalous; every other graph is kept as normal, in
/// order.
pub fn downsample_class(
    collection: &GraphCollection,
    target_class: i64,
    keep_fraction: f64,
    seed: u64,
) -> Result<GraphCollection> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "keep fraction {keep_fraction} outside (0, 1]"
        )));
    }
    let members: Vec<usize> = (0..collection.len())
        .filter(|&i| collection.classes[i] == target_class)
        .collect();
    if members.is_empty() {
        return Err(Error::ClassAbsent(target_class));
    }
    let keep = downsample_count(members.len(), keep_fraction);
    let mut rng = stream_rng(seed, Stream::Sampling);
    let mut kept = vec![false; collection.len()];
    for i in sample(&mut rng, members.len(), keep).iter() {
        kept[members[i]] = true;
    }
    let mut graphs = Vec::new();
    let mut classes = Vec::new();
    let mut labels = Vec::new();
    for (i, g) in collection.graphs.iter().enumerate() {
        let is_target = collection.classes[i] == target_class;
        if is_target && !kept[i] {
            continue;
        }
        graphs.push(g.clone());
        classes.push(collection.classes[i]);
        labels.push(is_target);
    }
    Ok(GraphCollection {
        graphs,
        classes,
        labels: Some(labels),
    })
}

fn mean_rows(h: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; h.cols()];
    for row in h.iter_rows() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let n = h.rows() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Mean of the node representations.
pub fn graph_readout(encoder: &EncoderState, graph: &Graph) -> Result<Vec<f64>> {
    if graph.num_nodes() == 0 {
        return Err(Error::EmptyGraph);
    }
    let ops = Propagation::new(graph);
    Ok(mean_rows(&encoder.encode(graph, &ops, None)?))
}

fn readouts(encoder: &EncoderState, graphs: &[Graph]) -> Result<Matrix> {
    let rows = graphs
        .iter()
        .map(|g| graph_readout(encoder, g))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

/// Stratified split over graph indices: per class `ceil(ratio · size)`
/// graphs to train, as many again to validation, the rest to test. Uses
/// the node split type with graph indices in place of node ids.
pub fn stratified_split(labels: &[bool], train_ratio: f64, seed: u64) -> Result<SplitSpec> {
    if !(train_ratio > 0.0 && train_ratio < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "train ratio {train_ratio} outside (0, 0.5)"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Split);
    let mut parts = Vec::new();
    for (class, name) in [(true, "anomalous"), (false, "normal")] {
        let pool: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let k = ceil_count(train_ratio, pool.len());
        let mut order: Vec<usize> = sample(&mut rng, pool.len(), pool.len())
            .iter()
            .map(|i| pool[i])
            .collect();
        let test = order.split_off((2 * k).min(order.len()));
        let val = order.split_off(k.min(order.len()));
        let train = order;
        for (set, which) in [(&train, "train"), (&val, "validation"), (&test, "test")] {
            if set.is_empty() {
                return Err(Error::EmptyStratum(format!("{which} {name} graphs")));
            }
        }
        parts.push((train, val, test));
    }
    let (ta, va, sa) = parts.remove(0);
    let (tn, vn, sn) = parts.remove(0);
    let mut test = [sa, sn].concat();
    test.sort_unstable();
    Ok(SplitSpec {
        train_anomalies: ta,
        train_normals: tn,
        val_anomalies: va,
        val_normals: vn,
        test,
        seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum GraphMode {
    Pretrain { objective: Objective },
    End2End,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphLevelConfig {
    pub encoder: EncoderKind,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub pretrain_epochs: usize,
    pub lr: f64,
}

impl Default for GraphLevelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderKind::Gin,
            num_layers: 2,
            hidden_dim: 32,
            activation: Activation::Relu,
            epochs: 200,
            pretrain_epochs: 200,
            lr: 0.005,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphLevelResult {
    pub test_auroc: f64,
    pub test_auprc: f64,
    pub val_auprc: Option<f64>,
    pub val_auroc: Option<f64>,
    pub split: SplitSpec,
    pub pretrain_losses: Vec<f64>,
    pub train_losses: Vec<f64>,
}

/// Trains on a downsampled collection and reports test AUROC/AUPRC over
/// graphs. Pretraining sums the pretext loss over every graph and never
/// reads labels.
pub fn graphlevel_pipeline(
    collection: &GraphCollection,
    mode: &GraphMode,
    train_ratio: f64,
    config: &GraphLevelConfig,
    seed: u64,
) -> Result<GraphLevelResult> {
    let labels = collection.labels().ok_or_else(|| {
        Error::InvalidParameter("collection has no labels; downsample a class first".into())
    })?;
    let split = stratified_split(labels, train_ratio, seed)?;
    let enc_cfg = EncoderConfig {
        kind: config.encoder,
        num_layers: config.num_layers,
        hidden_dim: config.hidden_dim,
        activation: config.activation,
        input_dim: collection.graphs[0].feature_dim(),
    };
    enc_cfg.validate()?;
    let params = TrainParams::new(config.epochs, config.lr, seed);
    let (classifier, embeddings, val_scores, pretrain_losses, train_losses) = match mode {
        GraphMode::Pretrain { objective } => {
            let pre = pretrain_graphs(
                &collection.graphs,
                enc_cfg,
                objective,
                config.pretrain_epochs,
                config.lr,
                seed,
            )?;
            let emb = readouts(pre.encoder.state(), &collection.graphs)?;
            let ft = finetune_embeddings(emb, config.activation, &split, &params)?;
            (ft.classifier, ft.embeddings, ft.val_scores, pre.losses, ft.losses)
        }
        GraphMode::End2End => {
            let (enc, cls, losses) = end2end_graphs(&collection.graphs, enc_cfg, &split, &params)?;
            let emb = readouts(&enc, &collection.graphs)?;
            let val = score_embeddings(&cls, &emb, &split.val_nodes())?;
            (cls, emb, val, Vec::new(), losses)
        }
    };
    let val = validation_metrics(&split, &val_scores)?;
    let test = score_embeddings(&classifier, &embeddings, &split.test)?;
    let test_labels = split.test.iter().map(|&i| labels[i]).collect();
    let ls = LabeledScores::new(test.logits, test_labels)?;
    Ok(GraphLevelResult {
        test_auroc: auroc(&ls)?,
        test_auprc: auprc(&ls)?,
        val_auprc: val.map(|v| v.0),
        val_auroc: val.map(|v| v.1),
        split,
        pretrain_losses,
        train_losses,
    })
}

/// Joint encoder + classifier training on readouts of the training graphs,
/// class-weighted as at node level, with validation-AUPRC checkpointing.
fn end2end_graphs(
    graphs: &[Graph],
    enc_cfg: EncoderConfig,
    split: &SplitSpec,
    params: &TrainParams,
) -> Result<(EncoderState, ClassifierState, Vec<f64>)> {
    let ops: Vec<Propagation> = graphs.iter().map(Propagation::new).collect();
    let mut encoder = EncoderState::init(enc_cfg, params.seed)?;
    let mut classifier =
        ClassifierState::init(encoder.config().hidden_dim, encoder.config().activation, params.seed)?;
    let (a, n) = (split.train_anomalies.len(), split.train_normals.len());
    let anomaly_weight = if n == 0 { 1.0 } else { n as f64 / a as f64 };
    let train = split.train_nodes();
    let val_nodes = split.val_nodes();
    let mut adam = Adam::new(AdamConfig::with_lr(params.lr));
    let mut losses = Vec::with_capacity(params.epochs);
    let mut best: Option<(f64, EncoderState, ClassifierState)> = None;
    for epoch in 0..params.epochs {
        let mut tape = Tape::new();
        let enc = encoder.bind(&mut tape, true)?;
        let cls = classifier.bind(&mut tape, true)?;
        let mut total = None;
        for (k, &gi) in train.iter().enumerate() {
            let x = tape.constant(graphs[gi].features().clone())?;
            let h = encoder.forward(&mut tape, &enc, &ops[gi], x)?;
            let pooled = tape.mean_rows(h)?;
            let logit = classifier.forward(&mut tape, &cls, pooled)?;
            let (target, weight) = if k < a { (1.0, anomaly_weight) } else { (0.0, 1.0) };
            let l = tape.bce_with_logits(logit, &[target], Some(&[weight]))?;
            total = Some(match total {
                None => l,
                Some(t) => tape.add(t, l)?,
            });
        }
        let total = total.ok_or(Error::NoLabeledAnomalies)?;
        let loss = tape.scale(total, 1.0 / train.len() as f64)?;
        losses.push(tape.value(loss).data()[0]);
        let grads = tape.backward(loss)?;
        let g: Vec<Matrix> = enc.params.iter().chain(&cls).map(|&v| grads.wrt(v)).collect();
        let mut all = encoder.parameters_mut();
        all.extend(classifier.parameters_mut());
        adam.step(&mut all, &g)?;

        let done = epoch + 1;
        if done % params.eval_every == 0 || done == params.epochs {
            let emb = readouts(&encoder, graphs)?;
            let val = score_embeddings(&classifier, &emb, &val_nodes)?;
            if let Some((ap, _)) = validation_metrics(split, &val)? {
                if best.as_ref().map_or(true, |(b, ..)| ap > *b) {
                    best = Some((ap, encoder.clone(), classifier.clone()));
                }
            }
        }
    }
    Ok(match best {
        Some((_, e, c)) => (e, c, losses),
        None => (encoder, classifier, losses),
    })
}
