//! Immutable attributed graph, sparse propagation operators and traversal.
//!
//! Graphs are undirected. Input edges are symmetrized, duplicates collapse
//! and self-loops are dropped; the GCN operator re-adds them.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result};

/// Ground-truth status of a node. `Unknown` nodes never enter a split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Normal,
    Anomaly,
    Unknown,
}

impl Label {
    pub fn is_anomaly(self) -> bool {
        self == Label::Anomaly
    }

    pub fn is_known(self) -> bool {
        self != Label::Unknown
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    features: Matrix,
    labels: Vec<Label>,
}

impl Graph {
    /// Builds a graph over `features.rows()` nodes.
    pub fn build(edges: &[(usize, usize)], features: Matrix, labels: Vec<Label>) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::LengthMismatch {
                what: "label count",
                expected: n,
                found: labels.len(),
            });
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::EndpointOutOfRange { u, v, n });
            }
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut list in adj {
            list.sort_unstable();
            list.dedup();
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        Ok(Self {
            offsets,
            neighbors,
            features,
            labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    pub fn nodes_with_label(&self, label: Label) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| self.labels[i] == label)
            .collect()
    }

    /// Same structure and features with a different label vector.
    pub fn with_labels(&self, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != self.num_nodes() {
            return Err(Error::LengthMismatch {
                what: "label count",
                expected: self.num_nodes(),
                found: labels.len(),
            });
        }
        Ok(Self {
            labels,
            ..self.clone()
        })
    }

    /// Same structure and labels with a different feature matrix.
    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        if features.rows() != self.num_nodes() {
            return Err(Error::LengthMismatch {
                what: "feature rows",
                expected: self.num_nodes(),
                found: features.rows(),
            });
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }

    /// Unweighted adjacency (weight 1 per stored edge, no diagonal).
    pub fn adjacency(&self) -> SparseMatrix {
        SparseMatrix {
            n: self.num_nodes(),
            offsets: self.offsets.clone(),
            cols: self.neighbors.clone(),
            weights: vec![1.0; self.neighbors.len()],
        }
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃ = D + I`.
    pub fn normalize_adjacency(&self) -> SparseMatrix {
        let n = self.num_nodes();
        let aug: Vec<f64> = (0..n).map(|u| (self.degree(u) + 1) as f64).collect();
        let weight = |u: usize, v: usize| {
            if u == v {
                1.0 / aug[u]
            } else {
                1.0 / (aug[u] * aug[v]).sqrt()
            }
        };
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(self.neighbors.len() + n);
        let mut weights = Vec::with_capacity(self.neighbors.len() + n);
        offsets.push(0);
        for u in 0..n {
            let mut self_done = false;
            for &v in self.neighbors(u) {
                if !self_done && v > u {
                    cols.push(u);
                    weights.push(weight(u, u));
                    self_done = true;
                }
                cols.push(v);
                weights.push(weight(u, v));
            }
            if !self_done {
                cols.push(u);
                weights.push(weight(u, u));
            }
            offsets.push(cols.len());
        }
        SparseMatrix {
            n,
            offsets,
            cols,
            weights,
        }
    }

    /// Hop distance from every node to the nearest source; `None` when no
    /// source is reachable.
    pub fn multi_source_bfs_hops(&self, sources: &[usize]) -> Result<Vec<Option<usize>>> {
        if sources.is_empty() {
            return Err(Error::EmptySources);
        }
        let n = self.num_nodes();
        let mut dist = vec![None; n];
        let mut queue = VecDeque::new();
        for &s in sources {
            if s >= n {
                return Err(Error::NodeOutOfRange { index: s, n });
            }
            if dist[s].is_none() {
                dist[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let next = dist[u].map(|d| d + 1);
            for &v in self.neighbors(u) {
                if dist[v].is_none() {
                    dist[v] = next;
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    pub fn stats(&self) -> Result<GraphStats> {
        let n = self.num_nodes();
        if n < 2 {
            return Err(Error::TooFewNodes(n));
        }
        let m = self.num_edges() as f64;
        let anomalies = self.nodes_with_label(Label::Anomaly);
        let avg_degree_anomaly = if anomalies.is_empty() {
            None
        } else {
            let total: usize = anomalies.iter().map(|&u| self.degree(u)).sum();
            Some(total as f64 / anomalies.len() as f64)
        };
        Ok(GraphStats {
            num_nodes: n,
            num_edges: self.num_edges(),
            density: 2.0 * m / (n as f64 * (n as f64 - 1.0)),
            avg_degree: 2.0 * m / n as f64,
            avg_degree_anomaly,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub density: f64,
    pub avg_degree: f64,
    pub avg_degree_anomaly: Option<f64>,
}

/// Square sparse matrix in compressed-row form with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.cols[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| self.weights[range.start + k])
    }

    /// `self * h`.
    pub fn mul_dense(&self, h: &Matrix) -> Result<Matrix> {
        self.check_rows(h)?;
        let f = h.cols();
        let mut out = Matrix::zeros(self.n, f);
        for i in 0..self.n {
            let out_row = out.row_mut(i);
            for (j, w) in self.row(i) {
                for (o, x) in out_row.iter_mut().zip(h.row(j)) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ * g`.
    pub fn mul_dense_transposed(&self, g: &Matrix) -> Result<Matrix> {
        self.check_rows(g)?;
        let f = g.cols();
        let mut out = Matrix::zeros(self.n, f);
        for i in 0..self.n {
            let g_row = g.row(i);
            for (j, w) in self.row(i) {
                for (o, x) in out.row_mut(j).iter_mut().zip(g_row) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                out.set(i, j, w);
            }
        }
        out
    }

    fn check_rows(&self, h: &Matrix) -> Result<()> {
        if h.rows() != self.n {
            return Err(Error::ShapeMismatch {
                op: "spmm",
                left: (self.n, self.n),
                right: h.shape(),
            });
        }
        Ok(())
    }
}
