//! Self-supervised encoder training without labels.
//!
//! * DGI: a bilinear discriminator scores node embeddings against the
//!   sigmoid of their mean. Negatives come from re-encoding the graph after
//!   shuffling a fraction `p` of the feature rows; structure is untouched.
//!   A fresh shuffle is drawn every epoch.
//! * GraphMAE: a fraction of node features is replaced by a learnable mask
//!   token, the encoded rows of masked nodes are zeroed again, a one-layer
//!   GCN decoder reconstructs the features and the scaled cosine error is
//!   taken over the masked rows only.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Adam, AdamConfig, Tape, Var};
use crate::encoders::{glorot_uniform, EncoderConfig, EncoderState, FrozenEncoder, Propagation};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Graph, Matrix, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DgiConfig {
    pub shuffle_ratio: f64,
}

impl Default for DgiConfig {
    fn default() -> Self {
        Self { shuffle_ratio: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaeConfig {
    pub mask_ratio: f64,
    pub gamma: f64,
}

impl Default for MaeConfig {
    fn default() -> Self {
        Self {
            mask_ratio: 0.5,
            gamma: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Objective {
    Dgi(DgiConfig),
    #[serde(rename = "graphmae")]
    GraphMae(MaeConfig),
}

/// `ceil(ratio · n)` guarded against representation error (0.3 · 10 must be 3).
pub(crate) fn ceil_count(ratio: f64, n: usize) -> usize {
    let raw = ratio * n as f64;
    let nearest = raw.round();
    let count = if (raw - nearest).abs() < 1e-9 {
        nearest
    } else {
        raw.ceil()
    };
    (count.max(0.0) as usize).min(n)
}

/// Corrupted features and the log of what moved: `selected[k]` received the
/// original row `sources[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Corruption {
    pub features: Matrix,
    pub selected: Vec<usize>,
    pub sources: Vec<usize>,
}

/// Picks `ceil(p · N)` distinct rows uniformly and permutes them among
/// themselves (fixed points allowed). `p = 0` returns the input unchanged.
pub fn dgi_corrupt(features: &Matrix, ratio: f64, rng: &mut impl Rng) -> Result<Corruption> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidParameter(format!(
            "shuffle ratio {ratio} outside [0, 1]"
        )));
    }
    let n = features.rows();
    let k = ceil_count(ratio, n);
    let mut selected = sample(rng, n, k).into_vec();
    selected.sort_unstable();
    let mut sources = selected.clone();
    sources.shuffle(rng);
    let mut out = features.clone();
    for (&dst, &src) in selected.iter().zip(&sources) {
        out.row_mut(dst).copy_from_slice(features.row(src));
    }
    Ok(Corruption {
        features: out,
        selected,
        sources,
    })
}

/// Half the sum of mean BCE on positive logits (target 1) and negative
/// logits (target 0).
pub fn dgi_objective(tape: &mut Tape<'_>, positive: Var, negative: Var) -> Result<Var> {
    let n_pos = tape.value(positive).len();
    let n_neg = tape.value(negative).len();
    let pos = tape.bce_with_logits(positive, &vec![1.0; n_pos], None)?;
    let neg = tape.bce_with_logits(negative, &vec![0.0; n_neg], None)?;
    let both = tape.add(pos, neg)?;
    tape.scale(both, 0.5)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DgiModel {
    pub encoder: EncoderState,
    pub discriminator: Matrix,
}

impl DgiModel {
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        let encoder = EncoderState::init(config, seed)?;
        let h = encoder.config().hidden_dim;
        let mut rng = stream_rng(seed, Stream::Classifier);
        Ok(Self {
            encoder,
            discriminator: glorot_uniform(&mut rng, h, h),
        })
    }

    /// Encoder parameters followed by the discriminator.
    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.encoder.parameters_mut();
        out.push(&mut self.discriminator);
        out
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out = self.encoder.parameters();
        out.push(&self.discriminator);
        out
    }

    /// Records the DGI loss for one graph using an already drawn corruption.
    /// Returns the loss and the parameter variables in
    /// [`DgiModel::parameters`] order.
    pub fn loss_with_corruption<'g>(
        &self,
        tape: &mut Tape<'g>,
        graph: &Graph,
        ops: &'g Propagation,
        corrupted: &Matrix,
    ) -> Result<(Var, Vec<Var>)> {
        let h_dim = self.encoder.config().hidden_dim;
        if self.discriminator.shape() != (h_dim, h_dim) {
            return Err(Error::ShapeMismatch {
                op: "dgi discriminator",
                left: (h_dim, h_dim),
                right: self.discriminator.shape(),
            });
        }
        let enc = self.encoder.bind(tape, true)?;
        let w_d = tape.param(self.discriminator.clone())?;
        let x = tape.constant(graph.features().clone())?;
        let x_neg = tape.constant(corrupted.clone())?;
        let h = self.encoder.forward(tape, &enc, ops, x)?;
        let h_neg = self.encoder.forward(tape, &enc, ops, x_neg)?;
        let mean = tape.mean_rows(h)?;
        let summary = tape.sigmoid(mean)?;
        let summary_col = tape.transpose(summary)?;
        let projected = tape.matmul(w_d, summary_col)?;
        let pos = tape.matmul(h, projected)?;
        let neg = tape.matmul(h_neg, projected)?;
        let loss = dgi_objective(tape, pos, neg)?;
        let mut vars = enc.params;
        vars.push(w_d);
        Ok((loss, vars))
    }

    pub fn loss<'g>(
        &self,
        tape: &mut Tape<'g>,
        graph: &Graph,
        ops: &'g Propagation,
        config: &DgiConfig,
        rng: &mut impl Rng,
    ) -> Result<(Var, Vec<Var>)> {
        let corrupted = dgi_corrupt(graph.features(), config.shuffle_ratio, rng)?;
        self.loss_with_corruption(tape, graph, ops, &corrupted.features)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaeModel {
    pub encoder: EncoderState,
    pub mask_token: Matrix,
    pub decoder_weight: Matrix,
    pub decoder_bias: Matrix,
}

/// Uniform sample of `ceil(ratio · n)` nodes, sorted.
pub fn sample_mask(n: usize, ratio: f64, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mask ratio {ratio} outside (0, 1]"
        )));
    }
    let k = ceil_count(ratio, n);
    if k == 0 {
        return Err(Error::EmptyMask { ratio, n });
    }
    let mut mask = sample(rng, n, k).into_vec();
    mask.sort_unstable();
    Ok(mask)
}

/// Scaled cosine error between `target` and `reconstruction` on `mask` rows.
pub fn masked_reconstruction_loss(
    tape: &mut Tape<'_>,
    target: &Matrix,
    reconstruction: Var,
    mask: &[usize],
    gamma: f64,
) -> Result<Var> {
    if mask.is_empty() {
        return Err(Error::EmptyMask {
            ratio: 0.0,
            n: target.rows(),
        });
    }
    let picked = tape.select_rows(reconstruction, mask)?;
    let target_rows = target.select_rows(mask)?;
    tape.scaled_cosine_error(&target_rows, picked, gamma)
}

impl MaeModel {
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        let encoder = EncoderState::init(config, seed)?;
        let (h, d) = (encoder.config().hidden_dim, encoder.config().input_dim);
        let mut rng = stream_rng(seed, Stream::Classifier);
        Ok(Self {
            encoder,
            mask_token: Matrix::zeros(1, d),
            decoder_weight: glorot_uniform(&mut rng, h, d),
            decoder_bias: Matrix::zeros(1, d),
        })
    }

    /// Encoder parameters, then mask token, decoder weight and bias.
    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.encoder.parameters_mut();
        out.push(&mut self.mask_token);
        out.push(&mut self.decoder_weight);
        out.push(&mut self.decoder_bias);
        out
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out = self.encoder.parameters();
        out.push(&self.mask_token);
        out.push(&self.decoder_weight);
        out.push(&self.decoder_bias);
        out
    }

    /// Records the reconstruction for a given mask; returns `(X̂, params)`.
    pub fn reconstruct<'g>(
        &self,
        tape: &mut Tape<'g>,
        graph: &Graph,
        ops: &'g Propagation,
        mask: &[usize],
    ) -> Result<(Var, Vec<Var>)> {
        let enc = self.encoder.bind(tape, true)?;
        let token = tape.param(self.mask_token.clone())?;
        let w = tape.param(self.decoder_weight.clone())?;
        let b = tape.param(self.decoder_bias.clone())?;
        let x = tape.constant(graph.features().clone())?;
        let masked = tape.replace_rows(x, mask, token)?;
        let h = self.encoder.forward(tape, &enc, ops, masked)?;
        let remasked = tape.zero_rows(h, mask)?;
        let hw = tape.matmul(remasked, w)?;
        let agg = tape.spmm(&ops.norm, hw)?;
        let x_hat = tape.add_bias(agg, b)?;
        let mut vars = enc.params;
        vars.extend([token, w, b]);
        Ok((x_hat, vars))
    }

    pub fn loss_with_mask<'g>(
        &self,
        tape: &mut Tape<'g>,
        graph: &Graph,
        ops: &'g Propagation,
        mask: &[usize],
        gamma: f64,
    ) -> Result<(Var, Vec<Var>)> {
        let (x_hat, vars) = self.reconstruct(tape, graph, ops, mask)?;
        let loss = masked_reconstruction_loss(tape, graph.features(), x_hat, mask, gamma)?;
        Ok((loss, vars))
    }

    pub fn loss<'g>(
        &self,
        tape: &mut Tape<'g>,
        graph: &Graph,
        ops: &'g Propagation,
        config: &MaeConfig,
        rng: &mut impl Rng,
    ) -> Result<(Var, Vec<Var>)> {
        let mask = sample_mask(graph.num_nodes(), config.mask_ratio, rng)?;
        self.loss_with_mask(tape, graph, ops, &mask, config.gamma)
    }
}

/// Either pretext model, so collections and single graphs share one loop.
#[derive(Clone, Debug, PartialEq)]
pub enum PretextModel {
    Dgi(DgiModel),
    GraphMae(MaeModel),
}

impl PretextModel {
    pub fn init(objective: &Objective, config: EncoderConfig, seed: u64) -> Result<Self> {
        Ok(match objective {
            Objective::Dgi(_) => PretextModel::Dgi(DgiModel::init(config, seed)?),
            Objective::GraphMae(_) => PretextModel::GraphMae(MaeModel::init(config, seed)?),
        })
    }

    pub fn encoder(&self) -> &EncoderState {
        match self {
            PretextModel::Dgi(m) => &m.encoder,
            PretextModel::GraphMae(m) => &m.encoder,
        }
    }

    pub fn into_encoder(self) -> EncoderState {
        match self {
            PretextModel::Dgi(m) => m.encoder,
            PretextModel::GraphMae(m) => m.encoder,
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            PretextModel::Dgi(m) => m.parameters_mut(),
            PretextModel::GraphMae(m) => m.parameters_mut(),
        }
    }

    /// Loss on one graph with fresh corruption or mask from `rng`.
    pub fn loss<'g>(
        &self,
        tape: &mut Tape<'g>,
        graph: &Graph,
        ops: &'g Propagation,
        objective: &Objective,
        rng: &mut impl Rng,
    ) -> Result<(Var, Vec<Var>)> {
        match (self, objective) {
            (PretextModel::Dgi(m), Objective::Dgi(c)) => m.loss(tape, graph, ops, c, rng),
            (PretextModel::GraphMae(m), Objective::GraphMae(c)) => m.loss(tape, graph, ops, c, rng),
            _ => Err(Error::InvalidParameter(
                "objective does not match the pretext model".into(),
            )),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub encoder: FrozenEncoder,
    /// Loss at each epoch, measured before that epoch's update.
    pub losses: Vec<f64>,
}

/// Minimizes the pretext loss over `graphs` (summed per graph) with
/// full-batch Adam. Labels are never read.
pub fn pretrain_graphs(
    graphs: &[Graph],
    encoder_config: EncoderConfig,
    objective: &Objective,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<PretrainOutcome> {
    if epochs == 0 {
        return Err(Error::InvalidParameter("epochs must be at least 1".into()));
    }
    if graphs.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let ops: Vec<Propagation> = graphs.iter().map(Propagation::new).collect();
    let mut model = PretextModel::init(objective, encoder_config, seed)?;
    let stream = match objective {
        Objective::Dgi(_) => Stream::Corruption,
        Objective::GraphMae(_) => Stream::Mask,
    };
    let mut rng = stream_rng(seed, stream);
    let mut adam = Adam::new(AdamConfig::with_lr(lr));
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let non_finite = |e: Error| match e {
            Error::NonFinite(_) => Error::NonFiniteLoss { epoch },
            other => other,
        };
        let mut tape = Tape::new();
        let mut total: Option<Var> = None;
        let mut per_graph_vars = Vec::with_capacity(graphs.len());
        for (g, op) in graphs.iter().zip(&ops) {
            let (loss, vars) = model
                .loss(&mut tape, g, op, objective, &mut rng)
                .map_err(non_finite)?;
            total = Some(match total {
                None => loss,
                Some(t) => tape.add(t, loss).map_err(non_finite)?,
            });
            per_graph_vars.push(vars);
        }
        let total = total.expect("at least one graph");
        let value = tape.value(total).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        losses.push(value);
        let grads = tape.backward(total)?;
        // Each graph bound its own copy of the parameters; sum their gradients.
        let mut summed: Vec<Matrix> = per_graph_vars[0].iter().map(|&v| grads.wrt(v)).collect();
        for vars in &per_graph_vars[1..] {
            for (acc, &v) in summed.iter_mut().zip(vars) {
                for (a, g) in acc.data_mut().iter_mut().zip(grads.wrt(v).data()) {
                    *a += g;
                }
            }
        }
        if summed.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        adam.step(&mut model.parameters_mut(), &summed)?;
    }
    Ok(PretrainOutcome {
        encoder: FrozenEncoder::new(model.into_encoder()),
        losses,
    })
}

pub fn pretrain_run(
    graph: &Graph,
    encoder_config: EncoderConfig,
    objective: &Objective,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<PretrainOutcome> {
    pretrain_graphs(
        std::slice::from_ref(graph),
        encoder_config,
        objective,
        epochs,
        lr,
        seed,
    )
}
