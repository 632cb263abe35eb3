//! Threshold-free ranking metrics.
//!
//! Ties are handled as whole groups everywhere: AUROC gives tied pairs
//! half credit through average ranks, average precision admits an
//! equal-score group all at once, and hop ranks use average rank.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Parallel scores and binary labels (`true` = anomaly).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledScores {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl LabeledScores {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch {
                what: "labels for scores",
                expected: scores.len(),
                found: labels.len(),
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("labeled scores"));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn negatives(&self) -> usize {
        self.labels.len() - self.positives()
    }

    fn class_error(&self) -> Error {
        Error::SingleClass {
            positives: self.positives(),
            negatives: self.negatives(),
        }
    }
}

/// Indices sorted by score, `descending` or ascending, grouped by equal score.
fn tie_groups(scores: &[f64], descending: bool) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let o = scores[a].total_cmp(&scores[b]);
        if descending {
            o.reverse()
        } else {
            o
        }
    });
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]].partial_cmp(&scores[i]) == Some(Ordering::Equal) => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Mann-Whitney AUROC with average ranks for ties.
pub fn auroc(ls: &LabeledScores) -> Result<f64> {
    let p = ls.positives();
    let n = ls.negatives();
    if p == 0 || n == 0 {
        return Err(ls.class_error());
    }
    let mut rank_sum = 0.0;
    let mut seen = 0usize;
    for group in tie_groups(&ls.scores, false) {
        let size = group.len();
        // ranks seen+1 ..= seen+size, averaged
        let avg = seen as f64 + (size as f64 + 1.0) / 2.0;
        let pos = group.iter().filter(|&&i| ls.labels[i]).count();
        rank_sum += avg * pos as f64;
        seen += size;
    }
    let (p, n) = (p as f64, n as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: `Σ ΔRecall · Precision` over equal-score groups taken
/// in descending score order.
pub fn auprc(ls: &LabeledScores) -> Result<f64> {
    let total_pos = ls.positives();
    if total_pos == 0 {
        return Err(ls.class_error());
    }
    let mut tp = 0usize;
    let mut taken = 0usize;
    let mut ap = 0.0;
    for group in tie_groups(&ls.scores, true) {
        let pos = group.iter().filter(|&&i| ls.labels[i]).count();
        tp += pos;
        taken += group.len();
        if pos > 0 {
            ap += (pos as f64 / total_pos as f64) * (tp as f64 / taken as f64);
        }
    }
    Ok(ap)
}

/// Hop-distance bucket of an unlabeled anomaly relative to the labeled ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HopBucket {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
    #[serde(rename = "4+")]
    FourPlus,
    #[serde(rename = "unreachable")]
    Unreachable,
}

impl HopBucket {
    pub const ALL: [HopBucket; 5] = [
        HopBucket::One,
        HopBucket::Two,
        HopBucket::Three,
        HopBucket::FourPlus,
        HopBucket::Unreachable,
    ];

    /// `None` for hop 0, which an unlabeled node cannot have.
    pub fn from_hops(hops: Option<usize>) -> Option<Self> {
        match hops {
            None => Some(HopBucket::Unreachable),
            Some(0) => None,
            Some(1) => Some(HopBucket::One),
            Some(2) => Some(HopBucket::Two),
            Some(3) => Some(HopBucket::Three),
            Some(_) => Some(HopBucket::FourPlus),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HopBucket::One => "1",
            HopBucket::Two => "2",
            HopBucket::Three => "3",
            HopBucket::FourPlus => "4+",
            HopBucket::Unreachable => "unreachable",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketRank {
    pub count: usize,
    pub mean: f64,
}

/// Normalized rank of every entry: 1 for the highest score, 0 for the
/// lowest, average rank within ties. Needs at least two entries.
pub fn normalized_ranks(scores: &[f64]) -> Result<Vec<f64>> {
    let t = scores.len();
    if t < 2 {
        return Err(Error::InvalidParameter(format!(
            "ranking needs at least 2 nodes, got {t}"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("normalized_ranks"));
    }
    let mut out = vec![0.0; t];
    let mut seen = 0usize;
    for group in tie_groups(scores, true) {
        let rank = seen as f64 + (group.len() as f64 + 1.0) / 2.0;
        let normalized = 1.0 - (rank - 1.0) / (t as f64 - 1.0);
        for i in group.iter().copied() {
            out[i] = normalized;
        }
        seen += group.len();
    }
    Ok(out)
}

/// Mean normalized rank of test anomalies per hop bucket.
///
/// `scores` covers every test node; `anomaly_hops` lists, for each test
/// anomaly, its position in `scores` and its hop distance to the nearest
/// labeled anomaly. Empty buckets are absent from the map.
pub fn hop_avg_rank(
    scores: &[f64],
    anomaly_hops: &[(usize, Option<usize>)],
) -> Result<BTreeMap<HopBucket, BucketRank>> {
    let ranks = normalized_ranks(scores)?;
    let mut sums: BTreeMap<HopBucket, (usize, f64)> = BTreeMap::new();
    for &(pos, hops) in anomaly_hops {
        if pos >= scores.len() {
            return Err(Error::NodeOutOfRange {
                index: pos,
                n: scores.len(),
            });
        }
        let bucket = HopBucket::from_hops(hops).ok_or_else(|| {
            Error::InvalidParameter(format!("test node at position {pos} has hop distance 0"))
        })?;
        let entry = sums.entry(bucket).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += ranks[pos];
    }
    Ok(sums
        .into_iter()
        .map(|(b, (count, total))| {
            (
                b,
                BucketRank {
                    count,
                    mean: total / count as f64,
                },
            )
        })
        .collect())
}
