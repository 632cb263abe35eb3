//! Tape-based reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] lives for one forward/backward pass. Parameters are copied in
//! as leaves, every kernel appends a node, and [`Tape::backward`] walks the
//! nodes in exact reverse order. A tape can be differentiated once.
//!
//! ```
//! use gad_core::autodiff::Tape;
//! use gad_core::Matrix;
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Matrix::filled(2, 2, 3.0)).unwrap();
//! let loss = tape.sum(w).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(w).data(), &[1.0; 4]);
//! ```

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result, SparseMatrix};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

pub const LEAKY_RELU_SLOPE: f64 = 0.01;
const COSINE_EPS: f64 = 1e-8;

/// Elementwise nonlinearity. `PRelu` carries a learnable slope and goes
/// through [`Tape::prelu`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Prelu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_RELU_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
            Activation::Prelu => panic!("prelu needs its slope; use Tape::prelu"),
        }
    }

    /// Derivative expressed through input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
            Activation::Prelu => unreachable!(),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "leaky_relu" | "leakyrelu" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            "prelu" => Ok(Activation::Prelu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" | "none" => Ok(Activation::Identity),
            other => Err(Error::InvalidParameter(format!("unknown activation {other:?}"))),
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    idx: usize,
}

enum Op<'a> {
    Leaf,
    Add(usize, usize),
    AddBias(usize, usize),
    Scale(usize, f64),
    MatMul(usize, usize),
    Transpose(usize),
    SpMM(&'a SparseMatrix, usize),
    Act(usize, Activation),
    PRelu(usize, usize),
    MeanRows(usize),
    SelectRows(usize, Vec<usize>),
    ReplaceRows(usize, Vec<usize>, usize),
    ZeroRows(usize, Vec<usize>),
    Sum(usize),
    Bce {
        logits: usize,
        targets: Vec<f64>,
        weights: Option<Vec<f64>>,
    },
    Sce {
        target: Matrix,
        pred: usize,
        gamma: f64,
    },
}

struct Node<'a> {
    value: Matrix,
    requires_grad: bool,
    op: Op<'a>,
}

pub struct Tape<'a> {
    id: u64,
    nodes: Vec<Node<'a>>,
    consumed: bool,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, value: Matrix) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite("leaf"));
        }
        Ok(self.push(value, requires_grad, Op::Leaf))
    }

    pub fn value(&self, v: Var) -> &Matrix {
        debug_assert_eq!(v.tape, self.id);
        &self.nodes[v.idx].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let (x, y) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if x.shape() != y.shape() {
            return Err(shape_err("add", x, y));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Matrix::new(x.rows(), x.cols(), data)?;
        self.record(out, Op::Add(ia, ib), &[ia, ib], "add")
    }

    /// Adds a `1 x F` row to every row of an `N x F` matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(bias)?);
        let (x, b) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(shape_err("add_bias", x, b));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (o, bb) in out.row_mut(i).iter_mut().zip(b.data()) {
                *o += bb;
            }
        }
        self.record(out, Op::AddBias(ia, ib), &[ia, ib], "add_bias")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let ia = self.index(a)?;
        let out = self.nodes[ia].value.map(|v| v * factor);
        self.record(out, Op::Scale(ia, factor), &[ia], "scale")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let out = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        self.record(out, Op::MatMul(ia, ib), &[ia, ib], "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let out = self.nodes[ia].value.transpose();
        self.record(out, Op::Transpose(ia), &[ia], "transpose")
    }

    /// Sparse-dense product `adj * h`.
    pub fn spmm(&mut self, adj: &'a SparseMatrix, h: Var) -> Result<Var> {
        let ih = self.index(h)?;
        let out = adj.mul_dense(&self.nodes[ih].value)?;
        self.record(out, Op::SpMM(adj, ih), &[ih], "spmm")
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Result<Var> {
        if kind == Activation::Prelu {
            return Err(Error::InvalidParameter(
                "prelu needs a slope parameter".into(),
            ));
        }
        let ia = self.index(a)?;
        let out = self.nodes[ia].value.map(|v| kind.apply(v));
        self.record(out, Op::Act(ia, kind), &[ia], "activation")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Relu)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.activation(a, Activation::Sigmoid)
    }

    /// Parametric ReLU with a single shared `1 x 1` slope.
    pub fn prelu(&mut self, a: Var, slope: Var) -> Result<Var> {
        let (ia, is) = (self.index(a)?, self.index(slope)?);
        let s = &self.nodes[is].value;
        if s.shape() != (1, 1) {
            return Err(shape_err("prelu", &self.nodes[ia].value, s));
        }
        let alpha = s.data()[0];
        let out = self.nodes[ia]
            .value
            .map(|v| if v > 0.0 { v } else { alpha * v });
        self.record(out, Op::PRelu(ia, is), &[ia, is], "prelu")
    }

    /// Column means, `N x F -> 1 x F`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let x = &self.nodes[ia].value;
        if x.rows() == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut out = Matrix::zeros(1, x.cols());
        for row in x.iter_rows() {
            for (o, v) in out.data_mut().iter_mut().zip(row) {
                *o += v;
            }
        }
        let n = x.rows() as f64;
        out.data_mut().iter_mut().for_each(|o| *o /= n);
        self.record(out, Op::MeanRows(ia), &[ia], "mean_rows")
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let ia = self.index(a)?;
        let out = self.nodes[ia].value.select_rows(rows)?;
        self.record(out, Op::SelectRows(ia, rows.to_vec()), &[ia], "select_rows")
    }

    /// Copy of `base` with each listed row overwritten by the `1 x F` `token`.
    pub fn replace_rows(&mut self, base: Var, rows: &[usize], token: Var) -> Result<Var> {
        let (ib, it) = (self.index(base)?, self.index(token)?);
        let (x, t) = (&self.nodes[ib].value, &self.nodes[it].value);
        if t.rows() != 1 || t.cols() != x.cols() {
            return Err(shape_err("replace_rows", x, t));
        }
        let mut out = x.clone();
        for &r in rows {
            if r >= out.rows() {
                return Err(Error::NodeOutOfRange {
                    index: r,
                    n: out.rows(),
                });
            }
            out.row_mut(r).copy_from_slice(t.data());
        }
        self.record(
            out,
            Op::ReplaceRows(ib, rows.to_vec(), it),
            &[ib, it],
            "replace_rows",
        )
    }

    pub fn zero_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let ia = self.index(a)?;
        let mut out = self.nodes[ia].value.clone();
        for &r in rows {
            if r >= out.rows() {
                return Err(Error::NodeOutOfRange {
                    index: r,
                    n: out.rows(),
                });
            }
            out.row_mut(r).fill(0.0);
        }
        self.record(out, Op::ZeroRows(ia, rows.to_vec()), &[ia], "zero_rows")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.index(a)?;
        let total = self.nodes[ia].value.data().iter().sum();
        self.record(Matrix::scalar(total), Op::Sum(ia), &[ia], "sum")
    }

    /// Mean binary cross-entropy on logits, optionally weighted per element:
    /// `mean_i w_i * (max(z,0) - z*y + ln(1 + e^{-|z|}))`.
    pub fn bce_with_logits(
        &mut self,
        logits: Var,
        targets: &[f64],
        weights: Option<&[f64]>,
    ) -> Result<Var> {
        let il = self.index(logits)?;
        let z = &self.nodes[il].value;
        if targets.len() != z.len() {
            return Err(Error::ShapeMismatch {
                op: "bce_with_logits",
                left: z.shape(),
                right: (targets.len(), 1),
            });
        }
        if let Some(w) = weights {
            if w.len() != z.len() {
                return Err(Error::ShapeMismatch {
                    op: "bce_with_logits",
                    left: z.shape(),
                    right: (w.len(), 1),
                });
            }
        }
        if targets.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::InvalidParameter("bce targets must be 0 or 1".into()));
        }
        if z.is_empty() {
            return Err(Error::InvalidParameter("bce over zero elements".into()));
        }
        let mut total = 0.0;
        for (k, (&zk, &y)) in z.data().iter().zip(targets).enumerate() {
            let l = zk.max(0.0) - zk * y + (-zk.abs()).exp().ln_1p();
            total += weights.map_or(1.0, |w| w[k]) * l;
        }
        let loss = total / z.len() as f64;
        let op = Op::Bce {
            logits: il,
            targets: targets.to_vec(),
            weights: weights.map(<[f64]>::to_vec),
        };
        self.record(Matrix::scalar(loss), op, &[il], "bce_with_logits")
    }

    /// `mean_i (1 - cos(target_i, pred_i))^gamma`; `target` is a constant.
    pub fn scaled_cosine_error(&mut self, target: &Matrix, pred: Var, gamma: f64) -> Result<Var> {
        if !(gamma >= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma {gamma} < 1")));
        }
        let ip = self.index(pred)?;
        let p = &self.nodes[ip].value;
        if p.shape() != target.shape() {
            return Err(shape_err("scaled_cosine_error", target, p));
        }
        if p.rows() == 0 {
            return Err(Error::InvalidParameter("scaled cosine error over zero rows".into()));
        }
        if !target.is_finite() {
            return Err(Error::NonFinite("scaled_cosine_error"));
        }
        let total: f64 = (0..p.rows())
            .map(|i| (1.0 - cosine(target.row(i), p.row(i)).cos).max(0.0).powf(gamma))
            .sum();
        let loss = total / p.rows() as f64;
        let op = Op::Sce {
            target: target.clone(),
            pred: ip,
            gamma,
        };
        self.record(Matrix::scalar(loss), op, &[ip], "scaled_cosine_error")
    }

    /// Reverse pass from a `1 x 1` loss. Consumes the tape's gradient state:
    /// a second call fails with [`Error::StaleTape`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        let il = self.index(loss)?;
        if self.consumed {
            return Err(Error::StaleTape);
        }
        let shape = self.nodes[il].value.shape();
        if shape != (1, 1) {
            return Err(Error::NonScalarLoss(shape));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[il] = Some(Matrix::scalar(1.0));
        for idx in (0..=il).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
            grads,
        })
    }

    fn propagate(&self, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddBias(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.nodes[*b].requires_grad {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for row in g.iter_rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Scale(a, c) => self.accumulate(grads, *a, g.map(|v| v * c)),
            Op::MatMul(a, b) => {
                let (x, y) = (&self.nodes[*a].value, &self.nodes[*b].value);
                if self.nodes[*a].requires_grad {
                    self.accumulate(grads, *a, g.matmul(&y.transpose())?);
                }
                if self.nodes[*b].requires_grad {
                    self.accumulate(grads, *b, x.transpose().matmul(g)?);
                }
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::SpMM(adj, h) => {
                if self.nodes[*h].requires_grad {
                    self.accumulate(grads, *h, adj.mul_dense_transposed(g)?);
                }
            }
            Op::Act(a, kind) => {
                let x = &self.nodes[*a].value;
                let y = &node.value;
                let data = x
                    .data()
                    .iter()
                    .zip(y.data())
                    .zip(g.data())
                    .map(|((&xv, &yv), &gv)| gv * kind.derivative(xv, yv))
                    .collect();
                self.accumulate(grads, *a, Matrix::new(x.rows(), x.cols(), data)?);
            }
            Op::PRelu(a, s) => {
                let x = &self.nodes[*a].value;
                let alpha = self.nodes[*s].value.data()[0];
                if self.nodes[*a].requires_grad {
                    let data = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&xv, &gv)| if xv > 0.0 { gv } else { alpha * gv })
                        .collect();
                    self.accumulate(grads, *a, Matrix::new(x.rows(), x.cols(), data)?);
                }
                if self.nodes[*s].requires_grad {
                    let ds: f64 = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .filter(|(&xv, _)| xv <= 0.0)
                        .map(|(&xv, &gv)| xv * gv)
                        .sum();
                    self.accumulate(grads, *s, Matrix::scalar(ds));
                }
            }
            Op::MeanRows(a) => {
                let rows = self.nodes[*a].value.rows();
                let mut ga = Matrix::zeros(rows, g.cols());
                let scale = 1.0 / rows as f64;
                for i in 0..rows {
                    for (o, v) in ga.row_mut(i).iter_mut().zip(g.data()) {
                        *o = v * scale;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SelectRows(a, rows) => {
                let src = &self.nodes[*a].value;
                let mut ga = Matrix::zeros(src.rows(), src.cols());
                for (k, &r) in rows.iter().enumerate() {
                    for (o, v) in ga.row_mut(r).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::ReplaceRows(base, rows, token) => {
                let mut gt = Matrix::zeros(1, g.cols());
                let mut gb = g.clone();
                for &r in rows {
                    gb.row_mut(r).fill(0.0);
                }
                // A row listed twice is still overwritten once.
                let mut seen = rows.clone();
                seen.sort_unstable();
                seen.dedup();
                for &r in &seen {
                    for (o, v) in gt.data_mut().iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *base, gb);
                self.accumulate(grads, *token, gt);
            }
            Op::ZeroRows(a, rows) => {
                let mut ga = g.clone();
                for &r in rows {
                    ga.row_mut(r).fill(0.0);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let (r, c) = self.nodes[*a].value.shape();
                self.accumulate(grads, *a, Matrix::filled(r, c, g.data()[0]));
            }
            Op::Bce {
                logits,
                targets,
                weights,
            } => {
                let z = &self.nodes[*logits].value;
                let scale = g.data()[0] / z.len() as f64;
                let data = z
                    .data()
                    .iter()
                    .zip(targets)
                    .enumerate()
                    .map(|(k, (&zk, &y))| {
                        let w = weights.as_ref().map_or(1.0, |w| w[k]);
                        scale * w * (sigmoid(zk) - y)
                    })
                    .collect();
                self.accumulate(grads, *logits, Matrix::new(z.rows(), z.cols(), data)?);
            }
            Op::Sce {
                target,
                pred,
                gamma,
            } => {
                let p = &self.nodes[*pred].value;
                let m = p.rows() as f64;
                let mut gp = Matrix::zeros(p.rows(), p.cols());
                for i in 0..p.rows() {
                    let (x, y) = (target.row(i), p.row(i));
                    let c = cosine(x, y);
                    let one_minus = (1.0 - c.cos).max(0.0);
                    let outer = if *gamma == 1.0 {
                        1.0
                    } else {
                        gamma * one_minus.powf(gamma - 1.0)
                    };
                    let dl_dc = -g.data()[0] * outer / m;
                    let denom = c.norm_x * c.norm_y;
                    for (k, o) in gp.row_mut(i).iter_mut().enumerate() {
                        let mut dc = x[k] / denom;
                        if c.y_unclamped {
                            dc -= c.cos * y[k] / (c.norm_y * c.norm_y);
                        }
                        *o = dl_dc * dc;
                    }
                }
                self.accumulate(grads, *pred, gp);
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], idx: usize, g: Matrix) {
        if !self.nodes[idx].requires_grad {
            return;
        }
        match &mut grads[idx] {
            Some(existing) => {
                for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                    *e += v;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn index(&self, v: Var) -> Result<usize> {
        if v.tape != self.id {
            return Err(Error::ForeignVariable);
        }
        Ok(v.idx)
    }

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op<'a>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var {
            tape: self.id,
            idx: self.nodes.len() - 1,
        }
    }

    fn record(&mut self, value: Matrix, op: Op<'a>, inputs: &[usize], name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        Ok(self.push(value, requires_grad, op))
    }
}

struct Cosine {
    cos: f64,
    norm_x: f64,
    norm_y: f64,
    y_unclamped: bool,
}

fn cosine(x: &[f64], y: &[f64]) -> Cosine {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    let norm_x = nx.max(COSINE_EPS);
    let norm_y = ny.max(COSINE_EPS);
    Cosine {
        cos: dot / (norm_x * norm_y),
        norm_x,
        norm_y,
        y_unclamped: ny > COSINE_EPS,
    }
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

/// Gradients produced by one backward pass.
pub struct Gradients {
    tape: u64,
    shapes: Vec<(usize, usize)>,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when the loss does not
    /// depend on it.
    pub fn wrt(&self, v: Var) -> Matrix {
        assert_eq!(v.tape, self.tape, "variable from another tape");
        match &self.grads[v.idx] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.idx];
                Matrix::zeros(r, c)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are created on the first step
/// from the parameter shapes and checked on every later one.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::LengthMismatch {
                what: "adam gradient count",
                expected: params.len(),
                found: grads.len(),
            });
        }
        if self.step == 0 {
            self.first = params.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(Error::LengthMismatch {
                what: "adam parameter count",
                expected: self.first.len(),
                found: params.len(),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(shape_err("adam_step", p, g));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (k, p) in params.iter_mut().enumerate() {
            let g = grads[k].data();
            let m = self.first[k].data_mut();
            let v = self.second[k].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
