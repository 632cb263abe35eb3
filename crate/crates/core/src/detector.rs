//! Anomaly classifier and the two supervised training paradigms.
//!
//! Both paradigms minimize class-weighted BCE over the labeled training
//! nodes only (anomaly weight = #normal / #anomaly). Every `eval_every`
//! epochs, and at the last epoch, validation AUPRC is measured and the best
//! state so far is retained.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Adam, AdamConfig, Tape, Var};
use crate::data::SplitSpec;
use crate::encoders::{glorot_uniform, EncoderConfig, EncoderState, FrozenEncoder, Propagation};
use crate::metrics::{auprc, auroc, LabeledScores};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Graph, Matrix, Result};

/// Largest double below 1.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

/// Two-layer perceptron `act(H W1 + b1) W2 + b2` producing one logit per row.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierState {
    pub weight1: Matrix,
    pub bias1: Matrix,
    pub weight2: Matrix,
    pub bias2: Matrix,
    pub activation: Activation,
}

impl ClassifierState {
    /// Hidden width equals `input_dim`. PReLU falls back to ReLU here.
    pub fn init(input_dim: usize, activation: Activation, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidParameter("classifier input dim is 0".into()));
        }
        let activation = match activation {
            Activation::Prelu => Activation::Relu,
            a => a,
        };
        let mut rng = stream_rng(seed, Stream::Classifier);
        Ok(Self {
            weight1: glorot_uniform(&mut rng, input_dim, input_dim),
            bias1: Matrix::zeros(1, input_dim),
            weight2: glorot_uniform(&mut rng, input_dim, 1),
            bias2: Matrix::zeros(1, 1),
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight1.rows()
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        vec![&self.weight1, &self.bias1, &self.weight2, &self.bias2]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.weight1,
            &mut self.bias1,
            &mut self.weight2,
            &mut self.bias2,
        ]
    }

    pub fn bind(&self, tape: &mut Tape<'_>, trainable: bool) -> Result<Vec<Var>> {
        self.parameters()
            .into_iter()
            .map(|p| tape.leaf(p.clone(), trainable))
            .collect()
    }

    pub fn forward(&self, tape: &mut Tape<'_>, vars: &[Var], h: Var) -> Result<Var> {
        let z = tape.matmul(h, vars[0])?;
        let z = tape.add_bias(z, vars[1])?;
        let z = tape.activation(z, self.activation)?;
        let z = tape.matmul(z, vars[2])?;
        tape.add_bias(z, vars[3])
    }

    /// Logits for every row of `embeddings`.
    pub fn logits(&self, embeddings: &Matrix) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false)?;
        let h = tape.constant(embeddings.clone())?;
        let out = self.forward(&mut tape, &vars, h)?;
        Ok(tape.value(out).data().to_vec())
    }
}

/// Per-node anomaly scores for a node subset. Probabilities lie strictly in
/// (0, 1); ranking metrics use the logits, which do not saturate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub nodes: Vec<usize>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ScoreVector {
    pub fn from_logits(nodes: Vec<usize>, logits: Vec<f64>) -> Self {
        let probabilities = logits
            .iter()
            .map(|&z| crate::autodiff::sigmoid(z).clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP))
            .collect();
        Self {
            nodes,
            logits,
            probabilities,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Scores `subset` with a full forward pass.
pub fn score_nodes(
    encoder: &EncoderState,
    classifier: &ClassifierState,
    graph: &Graph,
    subset: &[usize],
) -> Result<ScoreVector> {
    if let Some(&bad) = subset.iter().find(|&&v| v >= graph.num_nodes()) {
        return Err(Error::NodeOutOfRange {
            index: bad,
            n: graph.num_nodes(),
        });
    }
    if subset.is_empty() {
        return Ok(ScoreVector::from_logits(Vec::new(), Vec::new()));
    }
    let ops = Propagation::new(graph);
    let h = encoder.encode(graph, &ops, None)?;
    score_embeddings(classifier, &h, subset)
}

/// Scores `subset` from precomputed embeddings.
pub fn score_embeddings(
    classifier: &ClassifierState,
    embeddings: &Matrix,
    subset: &[usize],
) -> Result<ScoreVector> {
    if classifier.input_dim() != embeddings.cols() {
        return Err(Error::ShapeMismatch {
            op: "score_nodes",
            left: (embeddings.rows(), classifier.input_dim()),
            right: embeddings.shape(),
        });
    }
    if subset.is_empty() {
        return Ok(ScoreVector::from_logits(Vec::new(), Vec::new()));
    }
    let rows = embeddings.select_rows(subset)?;
    Ok(ScoreVector::from_logits(subset.to_vec(), classifier.logits(&rows)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub eval_every: usize,
}

impl TrainParams {
    pub fn new(epochs: usize, lr: f64, seed: u64) -> Self {
        Self {
            epochs,
            lr,
            seed,
            eval_every: 10,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidParameter("eval_every must be at least 1".into()));
        }
        Ok(())
    }

    fn is_checkpoint(&self, epoch: usize) -> bool {
        let done = epoch + 1;
        done % self.eval_every == 0 || done == self.epochs
    }
}

/// Training-set rows, targets and class weights.
struct Supervision {
    nodes: Vec<usize>,
    targets: Vec<f64>,
    weights: Vec<f64>,
}

impl Supervision {
    fn from_split(split: &SplitSpec) -> Result<Self> {
        let (a, n) = (split.train_anomalies.len(), split.train_normals.len());
        if a == 0 {
            return Err(Error::NoLabeledAnomalies);
        }
        let anomaly_weight = if n == 0 { 1.0 } else { n as f64 / a as f64 };
        let nodes = split.train_nodes();
        let targets = (0..a + n).map(|i| if i < a { 1.0 } else { 0.0 }).collect();
        let weights = (0..a + n)
            .map(|i| if i < a { anomaly_weight } else { 1.0 })
            .collect();
        Ok(Self {
            nodes,
            targets,
            weights,
        })
    }
}

/// Validation AUPRC and AUROC computed from logits; `None` when the split
/// has no validation anomaly or no validation normal.
pub fn validation_metrics(split: &SplitSpec, val: &ScoreVector) -> Result<Option<(f64, f64)>> {
    if split.val_anomalies.is_empty() || split.val_normals.is_empty() {
        return Ok(None);
    }
    let labels = (0..val.len())
        .map(|i| i < split.val_anomalies.len())
        .collect();
    let ls = LabeledScores::new(val.logits.clone(), labels)?;
    Ok(Some((auprc(&ls)?, auroc(&ls)?)))
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub classifier: ClassifierState,
    pub embeddings: Matrix,
    pub val_scores: ScoreVector,
    pub losses: Vec<f64>,
    /// 1-based epoch of the retained state.
    pub best_epoch: usize,
    pub best_val_auprc: Option<f64>,
}

/// Trains a classifier on frozen embeddings. The encoder is only read.
pub fn finetune_run(
    frozen: &FrozenEncoder,
    graph: &Graph,
    split: &SplitSpec,
    params: &TrainParams,
) -> Result<FinetuneOutcome> {
    let ops = Propagation::new(graph);
    let embeddings = frozen.state().encode(graph, &ops, None)?;
    finetune_embeddings(
        embeddings,
        frozen.state().config().activation,
        split,
        params,
    )
}

/// Fine-tuning on an arbitrary embedding matrix (one row per node).
pub fn finetune_embeddings(
    embeddings: Matrix,
    activation: Activation,
    split: &SplitSpec,
    params: &TrainParams,
) -> Result<FinetuneOutcome> {
    params.validate()?;
    let sup = Supervision::from_split(split)?;
    let train_rows = embeddings.select_rows(&sup.nodes)?;
    let val_nodes = split.val_nodes();
    let mut classifier = ClassifierState::init(embeddings.cols(), activation, params.seed)?;
    let mut adam = Adam::new(AdamConfig::with_lr(params.lr));
    let mut losses = Vec::with_capacity(params.epochs);
    let mut best: Option<(f64, usize, ClassifierState)> = None;
    for epoch in 0..params.epochs {
        let mut tape = Tape::new();
        let vars = classifier.bind(&mut tape, true)?;
        let h = tape.constant(train_rows.clone())?;
        let logits = classifier.forward(&mut tape, &vars, h)?;
        let loss = tape.bce_with_logits(logits, &sup.targets, Some(&sup.weights))?;
        losses.push(tape.value(loss).data()[0]);
        let grads = tape.backward(loss)?;
        let g: Vec<Matrix> = vars.iter().map(|&v| grads.wrt(v)).collect();
        adam.step(&mut classifier.parameters_mut(), &g)?;

        if params.is_checkpoint(epoch) {
            let val = score_embeddings(&classifier, &embeddings, &val_nodes)?;
            if let Some((ap, _)) = validation_metrics(split, &val)? {
                if best.as_ref().map_or(true, |(b, _, _)| ap > *b) {
                    best = Some((ap, epoch + 1, classifier.clone()));
                }
            }
        }
    }
    let (best_val_auprc, best_epoch, classifier) = match best {
        Some((ap, e, c)) => (Some(ap), e, c),
        None => (None, params.epochs, classifier),
    };
    let val_scores = score_embeddings(&classifier, &embeddings, &val_nodes)?;
    Ok(FinetuneOutcome {
        classifier,
        embeddings,
        val_scores,
        losses,
        best_epoch,
        best_val_auprc,
    })
}

#[derive(Clone, Debug)]
pub struct End2EndOutcome {
    pub encoder: EncoderState,
    pub classifier: ClassifierState,
    pub embeddings: Matrix,
    pub val_scores: ScoreVector,
    pub losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_auprc: Option<f64>,
}

/// Records the supervised loss with both encoder and classifier trainable.
/// Returns the loss and variables (encoder params, then classifier params).
pub fn end2end_loss<'g>(
    tape: &mut Tape<'g>,
    encoder: &EncoderState,
    classifier: &ClassifierState,
    graph: &Graph,
    ops: &'g Propagation,
    split: &SplitSpec,
) -> Result<(Var, Vec<Var>)> {
    let sup = Supervision::from_split(split)?;
    let enc = encoder.bind(tape, true)?;
    let cls = classifier.bind(tape, true)?;
    let x = tape.constant(graph.features().clone())?;
    let h = encoder.forward(tape, &enc, ops, x)?;
    let h_train = tape.select_rows(h, &sup.nodes)?;
    let logits = classifier.forward(tape, &cls, h_train)?;
    let loss = tape.bce_with_logits(logits, &sup.targets, Some(&sup.weights))?;
    let mut vars = enc.params;
    vars.extend(cls);
    Ok((loss, vars))
}

/// Joint training of a fresh encoder and classifier.
pub fn end2end_run(
    encoder_config: EncoderConfig,
    graph: &Graph,
    split: &SplitSpec,
    params: &TrainParams,
) -> Result<End2EndOutcome> {
    params.validate()?;
    Supervision::from_split(split)?;
    let ops = Propagation::new(graph);
    let mut encoder = EncoderState::init(encoder_config, params.seed)?;
    let mut classifier = ClassifierState::init(
        encoder.config().hidden_dim,
        encoder.config().activation,
        params.seed,
    )?;
    let val_nodes = split.val_nodes();
    let mut adam = Adam::new(AdamConfig::with_lr(params.lr));
    let mut losses = Vec::with_capacity(params.epochs);
    let mut best: Option<(f64, usize, EncoderState, ClassifierState)> = None;
    for epoch in 0..params.epochs {
        let mut tape = Tape::new();
        let (loss, vars) = end2end_loss(&mut tape, &encoder, &classifier, graph, &ops, split)?;
        let value = tape.value(loss).data()[0];
        losses.push(value);
        let grads = tape.backward(loss)?;
        let g: Vec<Matrix> = vars.iter().map(|&v| grads.wrt(v)).collect();
        let mut all = encoder.parameters_mut();
        all.extend(classifier.parameters_mut());
        adam.step(&mut all, &g)?;

        if params.is_checkpoint(epoch) {
            let h = encoder.encode(graph, &ops, None)?;
            let val = score_embeddings(&classifier, &h, &val_nodes)?;
            if let Some((ap, _)) = validation_metrics(split, &val)? {
                if best.as_ref().map_or(true, |(b, ..)| ap > *b) {
                    best = Some((ap, epoch + 1, encoder.clone(), classifier.clone()));
                }
            }
        }
    }
    let (best_val_auprc, best_epoch, encoder, classifier) = match best {
        Some((ap, e, enc, cls)) => (Some(ap), e, enc, cls),
        None => (None, params.epochs, encoder, classifier),
    };
    let embeddings = encoder.encode(graph, &ops, None)?;
    let val_scores = score_embeddings(&classifier, &embeddings, &val_nodes)?;
    Ok(End2EndOutcome {
        encoder,
        classifier,
        embeddings,
        val_scores,
        losses,
        best_epoch,
        best_val_auprc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderKind;
    use crate::Label;

    fn split_of(anom: Vec<usize>, norm: Vec<usize>, va: Vec<usize>, vn: Vec<usize>, test: Vec<usize>) -> SplitSpec {
        SplitSpec {
            train_anomalies: anom,
            train_normals: norm,
            val_anomalies: va,
            val_normals: vn,
            test,
            seed: 0,
        }
    }

    #[test]
    fn zero_classifier_scores_half() {
        let mut c = ClassifierState::init(3, Activation::Relu, 0).unwrap();
        for p in c.parameters_mut() {
            p.data_mut().fill(0.0);
        }
        let h = Matrix::filled(4, 3, 0.7);
        let s = score_embeddings(&c, &h, &[0, 2, 3]).unwrap();
        assert_eq!(s.probabilities, vec![0.5; 3]);
        assert!(score_embeddings(&c, &h, &[]).unwrap().is_empty());
        assert!(score_embeddings(&c, &h, &[9]).is_err());
    }

    #[test]
    fn saturated_probabilities_stay_open() {
        let s = ScoreVector::from_logits(vec![0, 1], vec![800.0, -800.0]);
        assert!(s.probabilities[0] < 1.0 && s.probabilities[1] > 0.0);
    }

    #[test]
    fn finetune_separable_embeddings() {
        // anomalies have first coordinate +1, normals -1
        let n = 60;
        let mut data = Vec::new();
        for i in 0..n {
            let sign = if i < 15 { 1.0 } else { -1.0 };
            data.extend([sign + 0.01 * i as f64, 0.3 * ((i * 7 % 5) as f64), 1.0]);
        }
        let h = Matrix::new(n, 3, data).unwrap();
        let split = split_of(
            (0..5).collect(),
            (15..35).collect(),
            (5..10).collect(),
            (35..45).collect(),
            (10..15).chain(45..60).collect(),
        );
        let out = finetune_embeddings(h.clone(), Activation::Relu, &split, &TrainParams::new(200, 0.01, 1)).unwrap();
        let train = score_embeddings(&out.classifier, &h, &split.train_nodes()).unwrap();
        let labels = (0..25).map(|i| i < 5).collect();
        let ls = LabeledScores::new(train.logits, labels).unwrap();
        assert_eq!(auroc(&ls).unwrap(), 1.0);
        assert_eq!(out.best_val_auprc, Some(1.0));
        assert!(finetune_embeddings(h.clone(), Activation::Relu, &split, &TrainParams::new(0, 0.01, 1)).is_err());
        let none = split_of(vec![], (15..35).collect(), vec![], vec![], vec![]);
        assert!(matches!(
            finetune_embeddings(h, Activation::Relu, &none, &TrainParams::new(5, 0.01, 1)),
            Err(Error::NoLabeledAnomalies)
        ));
    }

    #[test]
    fn end2end_deterministic_and_descends() {
        let n = 40;
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).chain((0..n).map(|i| (i, (i + 7) % n))).collect();
        let labels: Vec<Label> = (0..n).map(|i| if i % 5 == 0 { Label::Anomaly } else { Label::Normal }).collect();
        let x = Matrix::new(n, 4, (0..n * 4).map(|v| {
            let node = v / 4;
            let base = ((v * 31 % 17) as f64) / 17.0;
            if node % 5 == 0 { base + 1.0 } else { base }
        }).collect()).unwrap();
        let g = Graph::build(&edges, x, labels).unwrap();
        let split = split_of(vec![0, 5, 10], vec![1, 2, 3, 4, 6, 7], vec![15, 20], vec![8, 9, 11], (21..40).collect());
        let cfg = EncoderConfig { kind: EncoderKind::Gcn, num_layers: 2, hidden_dim: 8, activation: Activation::Relu, input_dim: 4 };
        let p = TrainParams::new(60, 0.01, 3);
        let a = end2end_run(cfg.clone(), &g, &split, &p).unwrap();
        let b = end2end_run(cfg, &g, &split, &p).unwrap();
        assert_eq!(a.encoder, b.encoder);
        assert_eq!(a.classifier, b.classifier);
        assert!(a.losses.last().unwrap() < &a.losses[0]);
    }
}
