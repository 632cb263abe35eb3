#![allow(dead_code)]

pub mod gradcheck;

use std::collections::VecDeque;

use gad_core::autodiff::{Tape, Var};
use gad_core::{Graph, Label, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative errors, so entries whose true gradient is
/// numerically zero are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Connected-ish random graph: a random spanning path plus extra edges.
pub fn random_graph(rng: &mut impl Rng, n: usize, extra: usize, d: usize) -> Graph {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    for _ in 0..extra {
        edges.push((rng.gen_range(0..n), rng.gen_range(0..n)));
    }
    let labels = (0..n)
        .map(|i| if i % 4 == 0 { Label::Anomaly } else { Label::Normal })
        .collect();
    Graph::build(&edges, random_matrix(rng, n, d), labels).unwrap()
}

/// Erdos-Renyi-style edge list without any guarantee of connectivity.
pub fn sparse_random_edges(rng: &mut impl Rng, n: usize, m: usize) -> Vec<(usize, usize)> {
    (0..m).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect()
}

/// Maximum relative error between the tape gradient and central finite
/// differences, over every entry of every parameter.
///
/// `loss` records a scalar on the tape from the parameter variables.
pub fn fd_max_rel_error<'g, F>(params: &[Matrix], loss: F) -> f64
where
    F: Fn(&mut Tape<'g>, &[Var]) -> Var,
{
    let eval = |ps: &[Matrix]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone()).unwrap()).collect();
        let l = loss(&mut tape, &vars);
        tape.value(l).data()[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone()).unwrap()).collect();
    let l = loss(&mut tape, &vars);
    let grads = tape.backward(l).unwrap();
    let analytic: Vec<Matrix> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let mut worst = 0.0f64;
    let mut work: Vec<Matrix> = params.to_vec();
    for p in 0..params.len() {
        for k in 0..params[p].len() {
            let orig = params[p].data()[k];
            work[p].data_mut()[k] = orig + FD_STEP;
            let up = eval(&work);
            work[p].data_mut()[k] = orig - FD_STEP;
            let down = eval(&work);
            work[p].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[p].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Reduces any matrix variable to a scalar with fixed random weights,
/// `r^T X c`, so every entry gets a distinct nonzero gradient.
pub fn project<'g>(tape: &mut Tape<'g>, x: Var, rng: &mut impl Rng) -> Var {
    let (rows, cols) = tape.value(x).shape();
    let r = tape.constant(random_matrix(rng, 1, rows)).unwrap();
    let c = tape.constant(random_matrix(rng, cols, 1)).unwrap();
    let xc = tape.matmul(x, c).unwrap();
    tape.matmul(r, xc).unwrap()
}

/// Per-source BFS; distance to the nearest source is the minimum over
/// single-source searches.
pub fn bfs_oracle(graph: &Graph, sources: &[usize]) -> Vec<Option<usize>> {
    let n = graph.num_nodes();
    let mut best: Vec<Option<usize>> = vec![None; n];
    for &s in sources {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &v in graph.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for v in 0..n {
            if dist[v] != usize::MAX {
                best[v] = Some(best[v].map_or(dist[v], |b: usize| b.min(dist[v])));
            }
        }
    }
    best
}

/// Pairwise AUROC: P(score_anomaly > score_normal) + 0.5 P(tie).
pub fn auroc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

/// Average precision by sweeping every distinct score as a threshold:
/// `sum (R_t - R_{t-1}) P_t` with predictions `score >= t`.
pub fn auprc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let total_pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let (mut tp, mut predicted) = (0.0, 0.0);
        for (s, &l) in scores.iter().zip(labels) {
            if *s >= t {
                predicted += 1.0;
                if l {
                    tp += 1.0;
                }
            }
        }
        let recall = tp / total_pos;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

/// Random scores and labels with both classes present. With `ties`, scores
/// are drawn from a handful of values.
pub fn random_instance(rng: &mut impl Rng, ties: bool) -> (Vec<f64>, Vec<bool>) {
    let n = rng.gen_range(2..60);
    let levels = rng.gen_range(2..6);
    let mut scores: Vec<f64> = (0..n)
        .map(|_| {
            if ties {
                rng.gen_range(0..levels) as f64 / levels as f64
            } else {
                rng.gen_range(-3.0..3.0)
            }
        })
        .collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
    labels[0] = true;
    labels[1] = false;
    if ties {
        scores[1] = scores[0];
    }
    (scores, labels)
}
