//! GCN and GIN node encoders.
//!
//! A GCN layer computes `act(Â H W + b)` with the symmetric normalized
//! operator. A GIN layer computes `act(MLP((1 + ε) H + A H))` with sum
//! aggregation over the raw adjacency, a two-layer perceptron (ReLU
//! between) and fixed `ε = 0`. The activation is applied after every layer,
//! the last one included.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Tape, Var};
use crate::rng::{stream_rng, Stream};
use crate::{Error, Graph, Matrix, Result, SparseMatrix};

pub const GIN_EPSILON: f64 = 0.0;
pub const PRELU_INIT: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Gcn,
    Gin,
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(EncoderKind::Gcn),
            "gin" => Ok(EncoderKind::Gin),
            other => Err(Error::InvalidParameter(format!("unknown encoder {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub input_dim: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_dim == 0 || self.input_dim == 0 {
            return Err(Error::InvalidParameter(format!(
                "encoder dims must be positive: layers {}, hidden {}, input {}",
                self.num_layers, self.hidden_dim, self.input_dim
            )));
        }
        if self.activation == Activation::Sigmoid {
            return Err(Error::InvalidParameter(
                "sigmoid is not an encoder activation".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Gcn {
        weight: Matrix,
        bias: Matrix,
    },
    Gin {
        weight1: Matrix,
        bias1: Matrix,
        weight2: Matrix,
        bias2: Matrix,
    },
}

impl Layer {
    fn params(&self) -> Vec<&Matrix> {
        match self {
            Layer::Gcn { weight, bias } => vec![weight, bias],
            Layer::Gin {
                weight1,
                bias1,
                weight2,
                bias2,
            } => vec![weight1, bias1, weight2, bias2],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Layer::Gcn { weight, bias } => vec![weight, bias],
            Layer::Gin {
                weight1,
                bias1,
                weight2,
                bias2,
            } => vec![weight1, bias1, weight2, bias2],
        }
    }
}

/// Encoder weights. Parameters are ordered layer by layer, followed by the
/// shared PReLU slope when the activation is PReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderState {
    config: EncoderConfig,
    seed: u64,
    layers: Vec<Layer>,
    prelu_slope: Option<Matrix>,
}

/// Glorot-uniform `fan_in x fan_out` matrix.
pub fn glorot_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Matrix::new(fan_in, fan_out, data).expect("sized by construction")
}

impl EncoderState {
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, Stream::Init);
        let mut layers = Vec::with_capacity(config.num_layers);
        let mut fan_in = config.input_dim;
        let h = config.hidden_dim;
        for _ in 0..config.num_layers {
            let layer = match config.kind {
                EncoderKind::Gcn => Layer::Gcn {
                    weight: glorot_uniform(&mut rng, fan_in, h),
                    bias: Matrix::zeros(1, h),
                },
                EncoderKind::Gin => Layer::Gin {
                    weight1: glorot_uniform(&mut rng, fan_in, h),
                    bias1: Matrix::zeros(1, h),
                    weight2: glorot_uniform(&mut rng, h, h),
                    bias2: Matrix::zeros(1, h),
                },
            };
            layers.push(layer);
            fan_in = h;
        }
        let prelu_slope =
            (config.activation == Activation::Prelu).then(|| Matrix::scalar(PRELU_INIT));
        Ok(Self {
            config,
            seed,
            layers,
            prelu_slope,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.layers.iter().flat_map(Layer::params).collect();
        out.extend(self.prelu_slope.as_ref());
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self
            .layers
            .iter_mut()
            .flat_map(Layer::params_mut)
            .collect();
        out.extend(self.prelu_slope.as_mut());
        out
    }

    /// Sets every parameter to `value`.
    pub fn fill(&mut self, value: f64) {
        for p in self.parameters_mut() {
            p.data_mut().fill(value);
        }
    }

    /// Places the parameters on `tape`, trainable or not.
    pub fn bind(&self, tape: &mut Tape<'_>, trainable: bool) -> Result<EncoderVars> {
        let params = self
            .parameters()
            .into_iter()
            .map(|p| tape.leaf(p.clone(), trainable))
            .collect::<Result<_>>()?;
        Ok(EncoderVars { params })
    }

    /// Forward pass on a tape; `x` must be `N x input_dim`.
    pub fn forward<'g>(
        &self,
        tape: &mut Tape<'g>,
        vars: &EncoderVars,
        ops: &'g Propagation,
        x: Var,
    ) -> Result<Var> {
        let (rows, cols) = tape.value(x).shape();
        if cols != self.config.input_dim || rows != ops.norm.size() {
            return Err(Error::ShapeMismatch {
                op: "encode",
                left: (ops.norm.size(), self.config.input_dim),
                right: (rows, cols),
            });
        }
        let slope = self.prelu_slope.as_ref().map(|_| *vars.params.last().unwrap());
        let mut cursor = 0;
        let mut h = x;
        for layer in &self.layers {
            let pre = match layer {
                Layer::Gcn { .. } => {
                    let (w, b) = (vars.params[cursor], vars.params[cursor + 1]);
                    cursor += 2;
                    let hw = tape.matmul(h, w)?;
                    let agg = tape.spmm(&ops.norm, hw)?;
                    tape.add_bias(agg, b)?
                }
                Layer::Gin { .. } => {
                    let p = &vars.params[cursor..cursor + 4];
                    cursor += 4;
                    let neigh = tape.spmm(&ops.raw, h)?;
                    let own = if GIN_EPSILON == 0.0 {
                        h
                    } else {
                        tape.scale(h, 1.0 + GIN_EPSILON)?
                    };
                    let z = tape.add(own, neigh)?;
                    let m = tape.matmul(z, p[0])?;
                    let m = tape.add_bias(m, p[1])?;
                    let m = tape.relu(m)?;
                    let m = tape.matmul(m, p[2])?;
                    tape.add_bias(m, p[3])?
                }
            };
            h = apply_activation(tape, pre, self.config.activation, slope)?;
        }
        Ok(h)
    }

    /// Node representations as a plain matrix. `features_override` replaces
    /// the graph's own features.
    pub fn encode(
        &self,
        graph: &Graph,
        ops: &Propagation,
        features_override: Option<&Matrix>,
    ) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false)?;
        let x = tape.constant(features_override.unwrap_or(graph.features()).clone())?;
        let h = self.forward(&mut tape, &vars, ops, x)?;
        Ok(tape.value(h).clone())
    }

    /// Writes a JSON header line followed by the parameters as little-endian
    /// `f64`s in declaration order.
    pub fn save_checkpoint(&self, mut out: impl Write) -> Result<()> {
        let header = CheckpointHeader {
            config: self.config.clone(),
            seed: self.seed,
            num_values: self.parameters().iter().map(|p| p.len()).sum(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for p in self.parameters() {
            for v in p.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load_checkpoint(mut input: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[..newline])?;
        let mut state = Self::init(header.config, header.seed)?;
        let body = &bytes[newline + 1..];
        let expected: usize = state.parameters().iter().map(|p| p.len()).sum();
        if header.num_values != expected || body.len() != expected * 8 {
            return Err(Error::Checkpoint(format!(
                "expected {expected} values, header says {}, body holds {} bytes",
                header.num_values,
                body.len()
            )));
        }
        let mut chunks = body.chunks_exact(8);
        for p in state.parameters_mut() {
            for v in p.data_mut() {
                let raw: [u8; 8] = chunks.next().unwrap().try_into().unwrap();
                *v = f64::from_le_bytes(raw);
            }
        }
        Ok(state)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: EncoderConfig,
    seed: u64,
    num_values: usize,
}

pub(crate) fn apply_activation(
    tape: &mut Tape<'_>,
    x: Var,
    kind: Activation,
    slope: Option<Var>,
) -> Result<Var> {
    match (kind, slope) {
        (Activation::Prelu, Some(s)) => tape.prelu(x, s),
        (Activation::Prelu, None) => Err(Error::InvalidParameter("prelu slope missing".into())),
        (k, _) => tape.activation(x, k),
    }
}

/// Encoder parameters placed on a tape, in [`EncoderState::parameters`] order.
#[derive(Clone, Debug)]
pub struct EncoderVars {
    pub params: Vec<Var>,
}

/// The two propagation operators an encoder may need, built once per graph.
#[derive(Clone, Debug)]
pub struct Propagation {
    pub norm: SparseMatrix,
    pub raw: SparseMatrix,
}

impl Propagation {
    pub fn new(graph: &Graph) -> Self {
        Self {
            norm: graph.normalize_adjacency(),
            raw: graph.adjacency(),
        }
    }
}

/// An encoder whose weights are no longer trained.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenEncoder(EncoderState);

impl FrozenEncoder {
    pub fn new(state: EncoderState) -> Self {
        Self(state)
    }

    pub fn state(&self) -> &EncoderState {
        &self.0
    }

    pub fn into_inner(self) -> EncoderState {
        self.0
    }
}
