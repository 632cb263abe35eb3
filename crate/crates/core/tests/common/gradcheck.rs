//! Finite-difference suites. Each suite draws one random instance from a
//! seed and returns the worst relative gradient error on it.

use gad_core::autodiff::{Activation, Tape, Var};
use gad_core::data::SplitSpec;
use gad_core::detector::{end2end_loss, ClassifierState};
use gad_core::encoders::{EncoderConfig, EncoderKind, EncoderState, Propagation};
use gad_core::pretrain::{dgi_corrupt, sample_mask, DgiModel, MaeModel};
use gad_core::{Graph, Matrix};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{fd_max_rel_error, project, random_graph, random_matrix, rng, FD_STEP, REL_FLOOR};

pub type Suite = fn(u64) -> f64;

/// Instance sizes stay within N <= 20, D <= 8, hidden <= 8.
struct Dims {
    n: usize,
    d: usize,
    h: usize,
}

fn dims(rng: &mut impl Rng) -> Dims {
    Dims {
        n: rng.gen_range(4..=20),
        d: rng.gen_range(2..=8),
        h: rng.gen_range(2..=8),
    }
}

/// Like [`fd_max_rel_error`], but `loss` builds its own variables from the
/// parameter values and returns them in the same order.
pub fn fd_model_error<'g, F>(params: &[Matrix], loss: F) -> f64
where
    F: Fn(&mut Tape<'g>, &[Matrix]) -> (Var, Vec<Var>),
{
    let eval = |ps: &[Matrix]| -> f64 {
        let mut tape = Tape::new();
        let (l, _) = loss(&mut tape, ps);
        tape.value(l).data()[0]
    };
    let mut tape = Tape::new();
    let (l, vars) = loss(&mut tape, params);
    assert_eq!(vars.len(), params.len());
    let grads = tape.backward(l).unwrap();
    let mut worst = 0.0f64;
    let mut work = params.to_vec();
    for (p, &v) in vars.iter().enumerate() {
        let analytic = grads.wrt(v);
        for k in 0..params[p].len() {
            let orig = params[p].data()[k];
            work[p].data_mut()[k] = orig + FD_STEP;
            let up = eval(&work);
            work[p].data_mut()[k] = orig - FD_STEP;
            let down = eval(&work);
            work[p].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic.data()[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR));
        }
    }
    worst
}

fn set_params(dst: Vec<&mut Matrix>, src: &[Matrix]) {
    assert_eq!(dst.len(), src.len());
    for (d, s) in dst.into_iter().zip(src) {
        *d = s.clone();
    }
}

/// Moves every parameter off its init value. Zero-initialized biases put
/// pre-activations of dead units exactly on an activation kink.
fn jitter(params: Vec<&mut Matrix>, rng: &mut impl Rng) {
    for p in params {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
}

fn enc_config(kind: EncoderKind, act: Activation, layers: usize, d: usize, h: usize) -> EncoderConfig {
    EncoderConfig {
        kind,
        num_layers: layers,
        hidden_dim: h,
        activation: act,
        input_dim: d,
    }
}

fn unary(seed: u64, op: impl Fn(&mut Tape<'_>, Var) -> Var) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, .. } = dims(&mut r);
    let x = random_matrix(&mut r, n, d);
    let proj_seed = r.gen();
    fd_max_rel_error(&[x], |t, v| {
        let y = op(t, v[0]);
        project(t, y, &mut rng(proj_seed))
    })
}

fn matmul(seed: u64) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, h } = dims(&mut r);
    let (a, b) = (random_matrix(&mut r, n, d), random_matrix(&mut r, d, h));
    let ps = r.gen();
    fd_max_rel_error(&[a, b], |t, v| {
        let y = t.matmul(v[0], v[1]).unwrap();
        project(t, y, &mut rng(ps))
    })
}

fn add(seed: u64) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, .. } = dims(&mut r);
    let (a, b) = (random_matrix(&mut r, n, d), random_matrix(&mut r, n, d));
    let ps = r.gen();
    fd_max_rel_error(&[a, b], |t, v| {
        let y = t.add(v[0], v[1]).unwrap();
        let y = t.activation(y, Activation::Tanh).unwrap();
        project(t, y, &mut rng(ps))
    })
}

fn add_bias(seed: u64) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, .. } = dims(&mut r);
    let (a, b) = (random_matrix(&mut r, n, d), random_matrix(&mut r, 1, d));
    let ps = r.gen();
    fd_max_rel_error(&[a, b], |t, v| {
        let y = t.add_bias(v[0], v[1]).unwrap();
        let y = t.activation(y, Activation::Tanh).unwrap();
        project(t, y, &mut rng(ps))
    })
}

fn scale(seed: u64) -> f64 {
    let factor = rng(seed ^ 0xabc).gen_range(-2.0..2.0);
    unary(seed, |t, x| t.scale(x, factor).unwrap())
}

fn transpose(seed: u64) -> f64 {
    unary(seed, |t, x| {
        let y = t.transpose(x).unwrap();
        t.activation(y, Activation::Tanh).unwrap()
    })
}

fn act(kind: Activation) -> impl Fn(u64) -> f64 {
    move |seed| unary(seed, |t, x| t.activation(x, kind).unwrap())
}

fn relu(seed: u64) -> f64 {
    act(Activation::Relu)(seed)
}
fn leaky_relu(seed: u64) -> f64 {
    act(Activation::LeakyRelu)(seed)
}
fn tanh(seed: u64) -> f64 {
    act(Activation::Tanh)(seed)
}
fn sigmoid(seed: u64) -> f64 {
    act(Activation::Sigmoid)(seed)
}
fn identity(seed: u64) -> f64 {
    act(Activation::Identity)(seed)
}

fn prelu(seed: u64) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, .. } = dims(&mut r);
    let x = random_matrix(&mut r, n, d);
    let slope = Matrix::scalar(r.gen_range(0.05..0.5));
    let ps = r.gen();
    fd_max_rel_error(&[x, slope], |t, v| {
        let y = t.prelu(v[0], v[1]).unwrap();
        project(t, y, &mut rng(ps))
    })
}

fn mean_rows(seed: u64) -> f64 {
    unary(seed, |t, x| {
        let y = t.activation(x, Activation::Tanh).unwrap();
        t.mean_rows(y).unwrap()
    })
}

fn chain(seed: u64) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, h } = dims(&mut r);
    let (a, w) = (random_matrix(&mut r, n, d), random_matrix(&mut r, d, h));
    let ps = r.gen();
    fd_max_rel_error(&[a, w], |t, v| {
        let y = t.matmul(v[0], v[1]).unwrap();
        let y = t.relu(y).unwrap();
        let y = t.mean_rows(y).unwrap();
        project(t, y, &mut rng(ps))
    })
}

fn rows_subset(r: &mut impl Rng, n: usize) -> Vec<usize> {
    let k = r.gen_range(1..=n);
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(r);
    all.truncate(k);
    all
}

fn select_rows(seed: u64) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, .. } = dims(&mut r);
    let x = random_matrix(&mut r, n, d);
    // Repeated indices accumulate.
    let mut rows = rows_subset(&mut r, n);
    rows.push(rows[0]);
    let ps = r.gen();
    fd_max_rel_error(&[x], |t, v| {
        let y = t.select_rows(v[0], &rows).unwrap();
        let y = t.activation(y, Activation::Tanh).unwrap();
        project(t, y, &mut rng(ps))
    })
}

fn replace_rows(seed: u64) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, .. } = dims(&mut r);
    let (x, token) = (random_matrix(&mut r, n, d), random_matrix(&mut r, 1, d));
    let rows = rows_subset(&mut r, n);
    let ps = r.gen();
    fd_max_rel_error(&[x, token], |t, v| {
        let y = t.replace_rows(v[0], &rows, v[1]).unwrap();
        let y = t.activation(y, Activation::Tanh).unwrap();
        project(t, y, &mut rng(ps))
    })
}

fn zero_rows(seed: u64) -> f64 {
    let rows = rows_subset(&mut rng(seed ^ 0x51), 4);
    unary(seed, move |t, x| {
        let y = t.zero_rows(x, &rows).unwrap();
        t.activation(y, Activation::Tanh).unwrap()
    })
}

fn sum(seed: u64) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, .. } = dims(&mut r);
    let x = random_matrix(&mut r, n, d);
    fd_max_rel_error(&[x], |t, v| {
        let y = t.activation(v[0], Activation::Tanh).unwrap();
        t.sum(y).unwrap()
    })
}

fn bce(seed: u64) -> f64 {
    let mut r = rng(seed);
    let n = r.gen_range(2..=20);
    let z = Matrix::new(n, 1, (0..n).map(|_| r.gen_range(-4.0..4.0)).collect()).unwrap();
    let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(r.gen_bool(0.4)))).collect();
    let w: Vec<f64> = (0..n).map(|_| r.gen_range(0.5..4.0)).collect();
    fd_max_rel_error(&[z], |t, v| t.bce_with_logits(v[0], &y, Some(&w)).unwrap())
}

fn sce(seed: u64) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, .. } = dims(&mut r);
    let target = random_matrix(&mut r, n, d);
    let pred = random_matrix(&mut r, n, d);
    let gamma = r.gen_range(1.0..3.0);
    fd_max_rel_error(&[pred], |t, v| t.scaled_cosine_error(&target, v[0], gamma).unwrap())
}

fn spmm_with(seed: u64, normalized: bool) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, .. } = dims(&mut r);
    let g = random_graph(&mut r, n, n, d);
    let adj = if normalized {
        g.normalize_adjacency()
    } else {
        g.adjacency()
    };
    let x = random_matrix(&mut r, n, d);
    let ps = r.gen();
    fd_max_rel_error(&[x], |t, v| {
        let y = t.spmm(&adj, v[0]).unwrap();
        let y = t.activation(y, Activation::Tanh).unwrap();
        project(t, y, &mut rng(ps))
    })
}

fn spmm_normalized(seed: u64) -> f64 {
    spmm_with(seed, true)
}

fn spmm_raw(seed: u64) -> f64 {
    spmm_with(seed, false)
}

fn encoder_suite(seed: u64, kind: EncoderKind, activation: Activation) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, h } = dims(&mut r);
    let g = random_graph(&mut r, n, n / 2, d);
    let ops = Propagation::new(&g);
    let layers = r.gen_range(1..=3);
    let mut enc = EncoderState::init(enc_config(kind, activation, layers, d, h), r.gen()).unwrap();
    jitter(enc.parameters_mut(), &mut r);
    let params: Vec<Matrix> = enc.parameters().into_iter().cloned().collect();
    let ps = r.gen();
    fd_model_error(&params, |t, p| {
        let mut e = enc.clone();
        set_params(e.parameters_mut(), p);
        let vars = e.bind(t, true).unwrap();
        let x = t.constant(g.features().clone()).unwrap();
        let out = e.forward(t, &vars, &ops, x).unwrap();
        (project(t, out, &mut rng(ps)), vars.params)
    })
}

fn gcn_encoder(seed: u64) -> f64 {
    encoder_suite(seed, EncoderKind::Gcn, Activation::Tanh)
}

fn gin_encoder(seed: u64) -> f64 {
    encoder_suite(seed, EncoderKind::Gin, Activation::LeakyRelu)
}

fn dgi_suite(seed: u64, kind: EncoderKind) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, h } = dims(&mut r);
    let g = random_graph(&mut r, n, n / 2, d);
    let ops = Propagation::new(&g);
    let mut model = DgiModel::init(enc_config(kind, Activation::Prelu, 2, d, h), r.gen()).unwrap();
    jitter(model.parameters_mut(), &mut r);
    let corrupted = dgi_corrupt(g.features(), 1.0, &mut r).unwrap().features;
    let params: Vec<Matrix> = model.parameters().into_iter().cloned().collect();
    fd_model_error(&params, |t, p| {
        let mut m = model.clone();
        set_params(m.parameters_mut(), p);
        m.loss_with_corruption(t, &g, &ops, &corrupted).unwrap()
    })
}

fn dgi_gcn(seed: u64) -> f64 {
    dgi_suite(seed, EncoderKind::Gcn)
}

fn dgi_gin(seed: u64) -> f64 {
    dgi_suite(seed, EncoderKind::Gin)
}

fn graphmae(seed: u64) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, h } = dims(&mut r);
    let g = random_graph(&mut r, n, n / 2, d);
    let ops = Propagation::new(&g);
    let mut model = MaeModel::init(enc_config(EncoderKind::Gcn, Activation::Tanh, 2, d, h), r.gen()).unwrap();
    jitter(model.parameters_mut(), &mut r);
    let mask = sample_mask(n, 0.5, &mut r).unwrap();
    let params: Vec<Matrix> = model.parameters().into_iter().cloned().collect();
    fd_model_error(&params, |t, p| {
        let mut m = model.clone();
        set_params(m.parameters_mut(), p);
        m.loss_with_mask(t, &g, &ops, &mask, 2.0).unwrap()
    })
}

fn small_split(g: &Graph) -> SplitSpec {
    let n = g.num_nodes();
    let anomalies: Vec<usize> = (0..n).filter(|i| i % 4 == 0).collect();
    let normals: Vec<usize> = (0..n).filter(|i| i % 4 != 0).collect();
    SplitSpec {
        train_anomalies: anomalies[..anomalies.len().div_ceil(2)].to_vec(),
        train_normals: normals[..normals.len() / 2].to_vec(),
        val_anomalies: vec![],
        val_normals: vec![],
        test: vec![],
        seed: 0,
    }
}

fn finetune(seed: u64) -> f64 {
    let mut r = rng(seed);
    let Dims { n, h, .. } = dims(&mut r);
    let embeddings = random_matrix(&mut r, n, h);
    let mut cls = ClassifierState::init(h, Activation::Tanh, r.gen()).unwrap();
    jitter(cls.parameters_mut(), &mut r);
    let targets: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i % 4 == 0))).collect();
    let pos = targets.iter().sum::<f64>();
    let weights: Vec<f64> = targets
        .iter()
        .map(|&y| if y == 1.0 { (n as f64 - pos) / pos } else { 1.0 })
        .collect();
    let params: Vec<Matrix> = cls.parameters().into_iter().cloned().collect();
    fd_model_error(&params, |t, p| {
        let mut c = cls.clone();
        set_params(c.parameters_mut(), p);
        let vars = c.bind(t, true).unwrap();
        let x = t.constant(embeddings.clone()).unwrap();
        let z = c.forward(t, &vars, x).unwrap();
        (t.bce_with_logits(z, &targets, Some(&weights)).unwrap(), vars)
    })
}

fn end2end_suite(seed: u64, kind: EncoderKind, activation: Activation) -> f64 {
    let mut r = rng(seed);
    let Dims { n, d, h } = dims(&mut r);
    let g = random_graph(&mut r, n, n / 2, d);
    let ops = Propagation::new(&g);
    let split = small_split(&g);
    let mut enc = EncoderState::init(enc_config(kind, activation, 2, d, h), r.gen()).unwrap();
    let mut cls = ClassifierState::init(h, activation, r.gen()).unwrap();
    jitter(enc.parameters_mut(), &mut r);
    jitter(cls.parameters_mut(), &mut r);
    let n_enc = enc.parameters().len();
    let params: Vec<Matrix> = enc
        .parameters()
        .into_iter()
        .chain(cls.parameters())
        .cloned()
        .collect();
    fd_model_error(&params, |t, p| {
        let (mut e, mut c) = (enc.clone(), cls.clone());
        set_params(e.parameters_mut(), &p[..n_enc]);
        set_params(c.parameters_mut(), &p[n_enc..]);
        end2end_loss(t, &e, &c, &g, &ops, &split).unwrap()
    })
}

fn end2end_gcn(seed: u64) -> f64 {
    end2end_suite(seed, EncoderKind::Gcn, Activation::Tanh)
}

fn end2end_gin(seed: u64) -> f64 {
    end2end_suite(seed, EncoderKind::Gin, Activation::Relu)
}

pub const KERNELS: &[(&str, Suite)] = &[
    ("matmul", matmul),
    ("add", add),
    ("add_bias", add_bias),
    ("scale", scale),
    ("transpose", transpose),
    ("spmm_normalized", spmm_normalized),
    ("spmm_raw", spmm_raw),
    ("relu", relu),
    ("leaky_relu", leaky_relu),
    ("tanh", tanh),
    ("sigmoid", sigmoid),
    ("identity", identity),
    ("prelu", prelu),
    ("mean_rows", mean_rows),
    ("matmul_relu_mean_rows", chain),
    ("select_rows", select_rows),
    ("replace_rows", replace_rows),
    ("zero_rows", zero_rows),
    ("sum", sum),
    ("bce_with_logits", bce),
    ("scaled_cosine_error", sce),
];

pub const COMPOSITES: &[(&str, Suite)] = &[
    ("gcn_encoder", gcn_encoder),
    ("gin_encoder", gin_encoder),
    ("dgi_gcn", dgi_gcn),
    ("dgi_gin", dgi_gin),
    ("graphmae", graphmae),
    ("finetune", finetune),
    ("end2end_gcn", end2end_gcn),
    ("end2end_gin", end2end_gin),
];

/// Worst error of `suite` over seeds `0..10`.
pub fn worst_over_seeds(suite: Suite) -> f64 {
    (0..10u64).map(suite).fold(0.0, f64::max)
}
