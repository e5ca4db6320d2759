//! Exemplar retrieval: exact dynamic time warping with an optional
//! Sakoe–Chiba band, K-nearest search, and label-wise random sampling.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{FetaError, Result};
use crate::preprocess::{ChannelSequence, SequenceSource};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DtwConfig {
    /// Half-width of the warping window in steps; `None` is unconstrained.
    pub band_radius: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtwOutcome {
    pub distance: f64,
    /// Set when the requested band admitted no warping path and had to be
    /// widened; holds the radius actually used.
    pub widened_to: Option<usize>,
}

/// Band membership with the diagonal scaled to the length ratio, so that
/// `radius` is measured along the longer sequence.
fn in_band(i: usize, j: usize, n: usize, m: usize, radius: usize) -> bool {
    let (i, j, n, m, r) = (i as u128, j as u128, n as u128, m as u128, radius as u128);
    let lhs = (i * (m - 1)).abs_diff(j * (n - 1));
    lhs <= r * (n - 1).max(m - 1)
}

fn dtw_table(a: &[f64], b: &[f64], radius: Option<usize>) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for i in 0..n {
        for j in 0..m {
            if radius.is_some_and(|r| !in_band(i, j, n, m, r)) {
                cur[j] = f64::INFINITY;
                continue;
            }
            let cost = (a[i] - b[j]).abs();
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let up = if i > 0 { prev[j] } else { f64::INFINITY };
                let left = if j > 0 { cur[j - 1] } else { f64::INFINITY };
                let diag = if i > 0 && j > 0 { prev[j - 1] } else { f64::INFINITY };
                up.min(left).min(diag)
            };
            cur[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// DTW with absolute-difference point cost, reporting band widening.
pub fn dtw_with_outcome(a: &[f64], b: &[f64], cfg: &DtwConfig) -> Result<DtwOutcome> {
    if a.is_empty() || b.is_empty() {
        return Err(FetaError::EmptySequence);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(FetaError::NonFiniteInput);
    }
    let Some(mut radius) = cfg.band_radius else {
        return Ok(DtwOutcome {
            distance: dtw_table(a, b, None),
            widened_to: None,
        });
    };
    let requested = radius;
    loop {
        let distance = dtw_table(a, b, Some(radius));
        if distance.is_finite() {
            return Ok(DtwOutcome {
                distance,
                widened_to: (radius != requested).then_some(radius),
            });
        }
        radius += 1;
    }
}

pub fn dtw_distance(a: &[f64], b: &[f64], cfg: &DtwConfig) -> Result<f64> {
    dtw_with_outcome(a, b, cfg).map(|o| o.distance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    /// Position in the training pool.
    pub train_index: usize,
    pub source: SequenceSource,
    pub label: String,
    pub values: Vec<f64>,
    /// `None` when the exemplar was not chosen by distance.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub channel: usize,
    pub neighbors: Vec<Neighbor>,
    pub histogram: BTreeMap<String, usize>,
}

impl NeighborSet {
    fn new(channel: usize, neighbors: Vec<Neighbor>) -> Self {
        let mut histogram = BTreeMap::new();
        for n in &neighbors {
            *histogram.entry(n.label.clone()).or_insert(0) += 1;
        }
        Self {
            channel,
            neighbors,
            histogram,
        }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn has_distances(&self) -> bool {
        self.neighbors.iter().all(|n| n.distance.is_some())
    }

    /// Compact record for reports: labels, distances and training indices.
    pub fn summary(&self) -> NeighborSummary {
        NeighborSummary {
            labels: self.neighbors.iter().map(|n| n.label.clone()).collect(),
            distances: self.neighbors.iter().map(|n| n.distance).collect(),
            train_indices: self.neighbors.iter().map(|n| n.train_index).collect(),
            histogram: self.histogram.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSummary {
    pub labels: Vec<String>,
    pub distances: Vec<Option<f64>>,
    pub train_indices: Vec<usize>,
    pub histogram: BTreeMap<String, usize>,
}

/// Sort `(distance, index)` pairs ascending with index as tie-break and keep
/// the first `k`.
pub(crate) fn k_smallest(mut scored: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    scored.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    scored.truncate(k);
    scored
}

/// The `k` training sequences closest to `query` under DTW.
pub fn retrieve_neighbors<L: AsRef<str>>(
    query: &[f64],
    train: &[ChannelSequence],
    labels: &[L],
    k: usize,
    cfg: &DtwConfig,
    channel: usize,
) -> Result<NeighborSet> {
    if train.is_empty() {
        return Err(FetaError::EmptyTrainSet);
    }
    if k == 0 {
        return Err(FetaError::Config("k must be at least 1".into()));
    }
    let scored = train
        .iter()
        .enumerate()
        .map(|(i, t)| Ok((dtw_distance(query, &t.values, cfg)?, i)))
        .collect::<Result<Vec<_>>>()?;
    let neighbors = k_smallest(scored, k)
        .into_iter()
        .map(|(d, i)| Neighbor {
            train_index: i,
            source: train[i].source,
            label: labels[i].as_ref().to_string(),
            values: train[i].values.clone(),
            distance: Some(d),
        })
        .collect();
    Ok(NeighborSet::new(channel, neighbors))
}

/// Label-wise random exemplars: classes are visited in sorted order, one
/// exemplar per class per round, each class's pool shuffled with `seed`.
pub fn random_exemplars<L: AsRef<str>>(
    train: &[ChannelSequence],
    labels: &[L],
    k: usize,
    seed: u64,
    channel: usize,
) -> Result<NeighborSet> {
    if train.is_empty() {
        return Err(FetaError::EmptyTrainSet);
    }
    let mut pools: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, y) in labels.iter().enumerate().take(train.len()) {
        pools.entry(y.as_ref()).or_default().push(i);
    }
    let mut rng = StdRng::seed_from_u64(seed);
    for pool in pools.values_mut() {
        pool.shuffle(&mut rng);
    }

    let want = k.min(train.len());
    let mut picked = Vec::with_capacity(want);
    let mut round = 0;
    while picked.len() < want {
        for pool in pools.values() {
            if picked.len() == want {
                break;
            }
            if let Some(&i) = pool.get(round) {
                picked.push(i);
            }
        }
        round += 1;
    }
    let neighbors = picked
        .into_iter()
        .map(|i| Neighbor {
            train_index: i,
            source: train[i].source,
            label: labels[i].as_ref().to_string(),
            values: train[i].values.clone(),
            distance: None,
        })
        .collect();
    Ok(NeighborSet::new(channel, neighbors))
}
