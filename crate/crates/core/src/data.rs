//! Dataset files, the synthetic benchmark generator, and train/validation/
//! test splits for both supervision regimes.
//!
//! On disk a dataset is three UTF-8 files:
//!
//! * edges: one whitespace-separated `u v` pair per line, `#` starts a comment;
//! * features: CSV of reals without header, row `i` belongs to node `i`;
//! * labels: one token per line, `0`, `1` or `?`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{stream_rng, Stream};
use crate::{Error, Graph, Label, Matrix, Result};

pub fn load_dataset(edge_path: &Path, feature_path: &Path, label_path: &Path) -> Result<Graph> {
    let features = read_features(feature_path)?;
    let labels = read_labels(label_path)?;
    if labels.len() != features.rows() {
        return Err(Error::LengthMismatch {
            what: "label lines vs feature rows",
            expected: features.rows(),
            found: labels.len(),
        });
    }
    let edges = read_edges(edge_path, features.rows())?;
    Graph::build(&edges, features, labels)
}

/// Edges and features only; every node is `Unknown`.
pub fn load_unlabeled(edge_path: &Path, feature_path: &Path) -> Result<Graph> {
    let features = read_features(feature_path)?;
    let edges = read_edges(edge_path, features.rows())?;
    let n = features.rows();
    Graph::build(&edges, features, vec![Label::Unknown; n])
}

pub fn save_dataset(
    graph: &Graph,
    edge_path: &Path,
    feature_path: &Path,
    label_path: &Path,
) -> Result<()> {
    save_unlabeled(graph, edge_path, feature_path)?;
    let mut labels = BufWriter::new(File::create(label_path)?);
    for l in graph.labels() {
        let token = match l {
            Label::Normal => "0",
            Label::Anomaly => "1",
            Label::Unknown => "?",
        };
        writeln!(labels, "{token}")?;
    }
    labels.flush()?;
    Ok(())
}

/// The edge and feature files of [`save_dataset`].
pub fn save_unlabeled(graph: &Graph, edge_path: &Path, feature_path: &Path) -> Result<()> {
    let mut edges = BufWriter::new(File::create(edge_path)?);
    for (u, v) in graph.edges() {
        writeln!(edges, "{u} {v}")?;
    }
    edges.flush()?;

    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(feature_path)?;
    for row in graph.features().iter_rows() {
        // `{}` on f64 prints the shortest string that parses back exactly.
        writer.write_record(row.iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut edges = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let node = |tok: Option<&str>| -> Result<usize> {
            let tok = tok.ok_or_else(|| parse_err(path, lineno, "expected two node ids"))?;
            let id: usize = tok
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad node id {tok:?}")))?;
            if id >= n {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("node id {id} out of range for {n} nodes"),
                ));
            }
            Ok(id)
        };
        let u = node(tokens.next())?;
        let v = node(tokens.next())?;
        if tokens.next().is_some() {
            return Err(parse_err(path, lineno, "more than two tokens"));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

fn read_features(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        let lineno = record.position().map_or(rows + 1, |p| p.line() as usize);
        if cols.is_some_and(|c| c != record.len()) {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} columns, found {}", cols.unwrap(), record.len()),
            ));
        }
        cols = Some(record.len());
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad number {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, lineno, "non-finite feature"));
            }
            data.push(v);
        }
        rows += 1;
    }
    Matrix::new(rows, cols.unwrap_or(0), data)
}

fn read_labels(path: &Path) -> Result<Vec<Label>> {
    let reader = BufReader::new(File::open(path)?);
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let label = match line.trim() {
            "0" => Label::Normal,
            "1" => Label::Anomaly,
            "?" => Label::Unknown,
            other => {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("label must be 0, 1 or ?, got {other:?}"),
                ))
            }
        };
        labels.push(label);
    }
    Ok(labels)
}

/// Stochastic-block-model background with injected anomalies.
///
/// Node features are `μ_block + ε` with block means drawn once from
/// `N(0, block_mean_scale²)` and unit Gaussian noise. Contextual anomalies
/// draw their features from the same distribution shifted by `delta` in
/// magnitude on every dimension; by default each shift has a random sign,
/// so contextual anomalies share no common direction. Structural anomalies keep normal features and are wired
/// into cliques of `clique_size`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub num_blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub anomaly_fraction: f64,
    /// Share of anomalies placed into cliques; 0 disables structural anomalies.
    pub structural_share: f64,
    pub clique_size: usize,
    pub feature_dim: usize,
    pub delta: f64,
    /// Each contextual anomaly gets `±delta` per dimension with independent
    /// fair signs instead of `+delta` everywhere.
    pub random_offset_signs: bool,
    pub block_mean_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self::sparse(2000, 0)
    }
}

impl SyntheticSpec {
    /// Four equal blocks tuned to an expected background degree of 4, with
    /// 5% anomalies split evenly between the two types.
    pub fn sparse(num_nodes: usize, seed: u64) -> Self {
        let num_blocks = 4;
        let (p_in, p_out) = sbm_probabilities(num_nodes, num_blocks, 4.0, 0.5);
        Self {
            num_nodes,
            num_blocks,
            p_in,
            p_out,
            anomaly_fraction: 0.05,
            structural_share: 0.5,
            clique_size: 8,
            feature_dim: 16,
            delta: 1.5,
            random_offset_signs: true,
            block_mean_scale: 1.0,
            seed,
        }
    }

    /// No injected signal: labels are a uniform random subset.
    pub fn null_signal(mut self) -> Self {
        self.delta = 0.0;
        self.structural_share = 0.0;
        self
    }

    pub fn num_anomalies(&self) -> usize {
        (self.anomaly_fraction * self.num_nodes as f64).round() as usize
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        let base = self.num_nodes / self.num_blocks;
        let extra = self.num_nodes % self.num_blocks;
        (0..self.num_blocks)
            .map(|b| base + usize::from(b < extra))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return bad(format!("edge probabilities {} / {}", self.p_in, self.p_out));
        }
        if !(self.anomaly_fraction > 0.0 && self.anomaly_fraction < 0.5) {
            return bad(format!("anomaly fraction {}", self.anomaly_fraction));
        }
        if !(0.0..=1.0).contains(&self.structural_share) {
            return bad(format!("structural share {}", self.structural_share));
        }
        if self.num_blocks == 0 || self.num_blocks > self.num_nodes || self.feature_dim == 0 {
            return bad("need 1 <= blocks <= nodes and a positive feature dim".into());
        }
        if !self.delta.is_finite() || !(self.block_mean_scale >= 0.0) {
            return bad("delta and block_mean_scale must be finite, scale non-negative".into());
        }
        Ok(())
    }
}

/// Intra/inter block probabilities giving `degree` expected neighbors, of
/// which `inter_degree` cross blocks.
pub fn sbm_probabilities(n: usize, blocks: usize, degree: f64, inter_degree: f64) -> (f64, f64) {
    let block = n as f64 / blocks as f64;
    let p_in = ((degree - inter_degree) / (block - 1.0).max(1.0)).clamp(0.0, 1.0);
    let outside = n as f64 - block;
    let p_out = if outside > 0.0 {
        (inter_degree / outside).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p_in, p_out)
}

#[derive(Clone, Debug)]
pub struct SyntheticGraph {
    pub graph: Graph,
    pub block_of: Vec<usize>,
    pub contextual: Vec<usize>,
    pub structural: Vec<usize>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Graph> {
    Ok(generate_synthetic_detailed(spec)?.graph)
}

pub fn generate_synthetic_detailed(spec: &SyntheticSpec) -> Result<SyntheticGraph> {
    spec.validate()?;
    let n = spec.num_nodes;
    let mut rng = stream_rng(spec.seed, Stream::Init);

    let mut block_of = Vec::with_capacity(n);
    for (b, size) in spec.block_sizes().into_iter().enumerate() {
        block_of.extend(std::iter::repeat(b).take(size));
    }

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block_of[u] == block_of[v] {
                spec.p_in
            } else {
                spec.p_out
            };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let num_anomalies = spec.num_anomalies();
    let q = spec.clique_size;
    let structural_count = if spec.structural_share > 0.0 {
        if q < 2 || q > num_anomalies {
            return Err(Error::InfeasibleClique {
                size: q,
                available: num_anomalies,
            });
        }
        let cliques = (spec.structural_share * num_anomalies as f64 / q as f64).round() as usize;
        cliques.clamp(1, num_anomalies / q) * q
    } else {
        0
    };
    if structural_count > num_anomalies {
        return Err(Error::InfeasibleClique {
            size: q,
            available: num_anomalies,
        });
    }
    let chosen: Vec<usize> = sample(&mut rng, n, num_anomalies).into_vec();
    let structural: Vec<usize> = chosen[..structural_count].to_vec();
    let contextual: Vec<usize> = chosen[structural_count..].to_vec();
    for clique in structural.chunks(q) {
        for (i, &u) in clique.iter().enumerate() {
            for &v in &clique[i + 1..] {
                edges.push((u, v));
            }
        }
    }

    let d = spec.feature_dim;
    let means: Vec<Vec<f64>> = (0..spec.num_blocks)
        .map(|_| {
            (0..d)
                .map(|_| spec.block_mean_scale * gaussian(&mut rng))
                .collect()
        })
        .collect();
    let mut shift = vec![vec![0.0; d]; n];
    for &u in &contextual {
        for s in shift[u].iter_mut() {
            let negative = spec.random_offset_signs && rng.gen::<bool>();
            *s = if negative { -spec.delta } else { spec.delta };
        }
    }
    let mut data = Vec::with_capacity(n * d);
    for u in 0..n {
        for (j, mean) in means[block_of[u]].iter().enumerate() {
            data.push(mean + shift[u][j] + gaussian(&mut rng));
        }
    }
    let features = Matrix::new(n, d, data)?;

    let mut labels = vec![Label::Normal; n];
    for &u in &chosen {
        labels[u] = Label::Anomaly;
    }
    let mut structural = structural;
    let mut contextual = contextual;
    structural.sort_unstable();
    contextual.sort_unstable();
    Ok(SyntheticGraph {
        graph: Graph::build(&edges, features, labels)?,
        block_of,
        contextual,
        structural,
    })
}

/// Standard normal draw via Box-Muller.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Train, validation and test node sets. Train and validation are split by
/// class; the five sets are pairwise disjoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_anomalies: Vec<usize>,
    pub train_normals: Vec<usize>,
    pub val_anomalies: Vec<usize>,
    pub val_normals: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    /// Train nodes, anomalies first.
    pub fn train_nodes(&self) -> Vec<usize> {
        [self.train_anomalies.as_slice(), &self.train_normals].concat()
    }

    pub fn val_nodes(&self) -> Vec<usize> {
        [self.val_anomalies.as_slice(), &self.val_normals].concat()
    }

    /// Checks pairwise disjointness and that train/validation labels agree
    /// with `graph`.
    pub fn validate(&self, graph: &Graph) -> Result<()> {
        let n = graph.num_nodes();
        let mut owner = vec![u8::MAX; n];
        let sets: [&[usize]; 5] = [
            &self.train_anomalies,
            &self.train_normals,
            &self.val_anomalies,
            &self.val_normals,
            &self.test,
        ];
        for (k, set) in sets.iter().enumerate() {
            for &v in *set {
                if v >= n {
                    return Err(Error::NodeOutOfRange { index: v, n });
                }
                if owner[v] != u8::MAX {
                    return Err(Error::OverlappingSets(v));
                }
                owner[v] = k as u8;
            }
        }
        let labels = graph.labels();
        let wrong = self
            .train_anomalies
            .iter()
            .chain(&self.val_anomalies)
            .find(|&&v| labels[v] != Label::Anomaly)
            .or_else(|| {
                self.train_normals
                    .iter()
                    .chain(&self.val_normals)
                    .find(|&&v| labels[v] != Label::Normal)
            });
        if let Some(&v) = wrong {
            return Err(Error::InvalidParameter(format!(
                "node {v} sits in a split set that disagrees with its label"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemiSplitParams {
    pub n_anom: usize,
    pub n_norm: usize,
    pub val_anom: usize,
    pub val_norm: usize,
}

impl Default for SemiSplitParams {
    fn default() -> Self {
        Self {
            n_anom: 20,
            n_norm: 80,
            val_anom: 20,
            val_norm: 80,
        }
    }
}

impl SemiSplitParams {
    pub fn with_train(n_anom: usize, n_norm: usize) -> Self {
        Self {
            n_anom,
            n_norm,
            ..Self::default()
        }
    }
}

/// Draws `take` items of `pool` uniformly without replacement, returning
/// `(taken sorted, rest in original order)`.
fn draw(rng: &mut ChaCha8Rng, pool: &[usize], take: usize) -> (Vec<usize>, Vec<usize>) {
    let mut picked = vec![false; pool.len()];
    for i in sample(rng, pool.len(), take).iter() {
        picked[i] = true;
    }
    let mut taken = Vec::with_capacity(take);
    let mut rest = Vec::with_capacity(pool.len() - take);
    for (i, &v) in pool.iter().enumerate() {
        if picked[i] {
            taken.push(v);
        } else {
            rest.push(v);
        }
    }
    (taken, rest)
}

/// Few-label regime: `n_anom`/`n_norm` training nodes, a disjoint
/// `val_anom`/`val_norm` validation sample, every other labeled node in test.
pub fn make_semi_split(graph: &Graph, params: SemiSplitParams, seed: u64) -> Result<SplitSpec> {
    if params.n_anom == 0 {
        return Err(Error::NoLabeledAnomalies);
    }
    let anomalies = graph.nodes_with_label(Label::Anomaly);
    let normals = graph.nodes_with_label(Label::Normal);
    let need_anom = params.n_anom + params.val_anom;
    let need_norm = params.n_norm + params.val_norm;
    if anomalies.len() < need_anom {
        return Err(Error::InsufficientLabels {
            class: "anomalies",
            needed: need_anom,
            available: anomalies.len(),
        });
    }
    if normals.len() < need_norm {
        return Err(Error::InsufficientLabels {
            class: "normals",
            needed: need_norm,
            available: normals.len(),
        });
    }
    let mut rng = stream_rng(seed, Stream::Split);
    let (train_anomalies, rest_a) = draw(&mut rng, &anomalies, params.n_anom);
    let (train_normals, rest_n) = draw(&mut rng, &normals, params.n_norm);
    let (val_anomalies, test_a) = draw(&mut rng, &rest_a, params.val_anom);
    let (val_normals, test_n) = draw(&mut rng, &rest_n, params.val_norm);
    let mut test = [test_a, test_n].concat();
    test.sort_unstable();
    Ok(SplitSpec {
        train_anomalies,
        train_normals,
        val_anomalies,
        val_normals,
        test,
        seed,
    })
}

/// Fully supervised regime: each class gives `round(train_ratio · size)`
/// nodes to train (at least 1, leaving at least 2); the rest is halved into
/// validation (rounded down) and test.
pub fn make_full_split(graph: &Graph, train_ratio: f64, seed: u64) -> Result<SplitSpec> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train ratio {train_ratio} outside (0, 1)"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Split);
    let mut per_class = Vec::new();
    for (label, name) in [(Label::Anomaly, "anomalies"), (Label::Normal, "normals")] {
        let pool = graph.nodes_with_label(label);
        if pool.len() < 3 {
            return Err(Error::InsufficientLabels {
                class: name,
                needed: 3,
                available: pool.len(),
            });
        }
        let k = ((train_ratio * pool.len() as f64).round() as usize).clamp(1, pool.len() - 2);
        let (train, rest) = draw(&mut rng, &pool, k);
        let (val, test) = draw(&mut rng, &rest, rest.len() / 2);
        per_class.push((train, val, test));
    }
    let (ta, va, sa) = per_class.remove(0);
    let (tn, vn, sn) = per_class.remove(0);
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
