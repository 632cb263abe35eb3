//! Label-propagation diagnostics: k-hop reachable ratio of unlabeled
//! anomalies, density classes, and reachability as a function of how many
//! anomalies are labeled.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::rng::{mix, stream_rng, Stream};
use crate::{Error, Graph, GraphStats, Label, Result};

/// `R_k` for `k = 1..=K` together with the hop distance of every unlabeled
/// anomaly to its nearest labeled one (`null` when unreachable).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityReport {
    #[serde(rename = "R")]
    pub ratios: Vec<f64>,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub hops: Vec<Option<usize>>,
}

impl ReachabilityReport {
    /// `R_k`, or `None` when `k` is 0 or beyond the computed range.
    pub fn ratio(&self, k: usize) -> Option<f64> {
        k.checked_sub(1).and_then(|i| self.ratios.get(i).copied())
    }
}

pub fn k_hop_reachable_ratio(
    graph: &Graph,
    labeled: &[usize],
    unlabeled: &[usize],
    max_k: usize,
) -> Result<ReachabilityReport> {
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledAnomalies);
    }
    if unlabeled.is_empty() {
        return Err(Error::EmptyUnlabeledAnomalies);
    }
    if max_k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let n = graph.num_nodes();
    let mut is_labeled = vec![false; n];
    for &v in labeled {
        if v >= n {
            return Err(Error::NodeOutOfRange { index: v, n });
        }
        is_labeled[v] = true;
    }
    for &u in unlabeled {
        if u >= n {
            return Err(Error::NodeOutOfRange { index: u, n });
        }
        if is_labeled[u] {
            return Err(Error::OverlappingSets(u));
        }
    }
    let dist = graph.multi_source_bfs_hops(labeled)?;
    let hops: Vec<Option<usize>> = unlabeled.iter().map(|&u| dist[u]).collect();
    let total = unlabeled.len() as f64;
    let ratios = (1..=max_k)
        .map(|k| hops.iter().filter(|h| h.is_some_and(|d| d <= k)).count() as f64 / total)
        .collect();
    Ok(ReachabilityReport {
        ratios,
        n_labeled: labeled.len(),
        n_unlabeled: unlabeled.len(),
        hops,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityKind {
    Sparse,
    Dense,
    OverSparse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityClass {
    pub kind: DensityKind,
    pub density: f64,
    pub avg_degree: f64,
}

/// Density above 1% is dense; otherwise an average degree of at most 2 is
/// over-sparse and anything else sparse. Exactly 1% is not dense.
pub const DENSE_THRESHOLD: f64 = 0.01;
pub const OVER_SPARSE_MAX_DEGREE: f64 = 2.0;

pub fn classify_density(stats: &GraphStats) -> DensityClass {
    classify(stats.density, stats.avg_degree)
}

pub fn classify(density: f64, avg_degree: f64) -> DensityClass {
    let kind = if density > DENSE_THRESHOLD {
        DensityKind::Dense
    } else if avg_degree <= OVER_SPARSE_MAX_DEGREE {
        DensityKind::OverSparse
    } else {
        DensityKind::Sparse
    };
    DensityClass {
        kind,
        density,
        avg_degree,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityRow {
    pub count: usize,
    pub mean_r2: f64,
    pub trials: usize,
}

/// For every count `c`, label `c` anomalies drawn uniformly and measure
/// `R_2` of the remaining ones; averaged over `trials` draws.
pub fn reachability_vs_labels(
    graph: &Graph,
    anomalies: &[usize],
    counts: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<ReachabilityRow>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(counts.len());
    for &c in counts {
        if c == 0 {
            return Err(Error::EmptyLabeledAnomalies);
        }
        if c >= anomalies.len() {
            return Err(Error::EmptyUnlabeledAnomalies);
        }
        let mut total = 0.0;
        for t in 0..trials {
            let mut rng = stream_rng(mix(seed ^ mix(c as u64)).wrapping_add(t as u64), Stream::Sampling);
            let picked = sample(&mut rng, anomalies.len(), c);
            let mut chosen = vec![false; anomalies.len()];
            for i in picked.iter() {
                chosen[i] = true;
            }
            let (labeled, unlabeled): (Vec<usize>, Vec<usize>) = {
                let mut l = Vec::with_capacity(c);
                let mut u = Vec::with_capacity(anomalies.len() - c);
                for (i, &a) in anomalies.iter().enumerate() {
                    if chosen[i] {
                        l.push(a);
                    } else {
                        u.push(a);
                    }
                }
                (l, u)
            };
            let report = k_hop_reachable_ratio(graph, &labeled, &unlabeled, 2)?;
            total += report.ratios[1];
        }
        rows.push(ReachabilityRow {
            count: c,
            mean_r2: total / trials as f64,
            trials,
        });
    }
    Ok(rows)
}

/// All anomaly-labeled nodes of `graph`.
pub fn anomalies_of(graph: &Graph) -> Vec<usize> {
    graph.nodes_with_label(Label::Anomaly)
}
