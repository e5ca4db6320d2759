//! Training-free channel relevance: a prototype-margin ratio (between-class
//! centroid spread over within-class spread) fused with approximate
//! leave-one-out 1-NN accuracy, both z-scored across channels.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FetaError, Result};
use crate::preprocess::mean_std;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub alpha: f64,
    pub top_m: usize,
    pub probe_size: usize,
    pub eps: f64,
    pub seed: u64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            top_m: 4,
            probe_size: 64,
            eps: 1e-8,
            seed: 42,
        }
    }
}

impl SelectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(FetaError::Config("alpha must lie in [0, 1]".into()));
        }
        if !(self.eps > 0.0) {
            return Err(FetaError::Config("eps must be positive".into()));
        }
        if self.top_m == 0 || self.probe_size == 0 {
            return Err(FetaError::Config("top-m and probe size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelScore {
    pub channel: usize,
    pub margin_score: f64,
    pub loo_accuracy: f64,
    pub fused: f64,
    /// 1-based.
    pub rank: usize,
}

fn check_equal_lengths<S: AsRef<[f64]>>(seqs: &[S]) -> Result<usize> {
    let len = seqs.first().map_or(0, |s| s.as_ref().len());
    if let Some(bad) = seqs.iter().find(|s| s.as_ref().len() != len) {
        return Err(FetaError::LengthMismatch(format!(
            "expected sequences of length {len}, found {}",
            bad.as_ref().len()
        )));
    }
    Ok(len)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `B / (W + eps)`: mean pairwise centroid distance over mean distance of
/// samples to their own class centroid.
pub fn prototype_margin_score<S: AsRef<[f64]>>(seqs: &[S], labels: &[&str], eps: f64) -> Result<f64> {
    if seqs.len() != labels.len() {
        return Err(FetaError::LengthMismatch(format!(
            "{} sequences but {} labels",
            seqs.len(),
            labels.len()
        )));
    }
    let len = check_equal_lengths(seqs)?;

    let mut members: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for (s, &y) in seqs.iter().zip(labels) {
        members.entry(y).or_default().push(s.as_ref());
    }
    if members.len() < 2 {
        return Err(FetaError::SingleClass);
    }

    let centroids: Vec<(&str, Vec<f64>)> = members
        .iter()
        .map(|(&y, xs)| {
            let mut mu = vec![0.0; len];
            for x in xs {
                for (m, v) in mu.iter_mut().zip(x.iter()) {
                    *m += v;
                }
            }
            let n = xs.len() as f64;
            mu.iter_mut().for_each(|m| *m /= n);
            (y, mu)
        })
        .collect();

    let within: f64 = centroids
        .iter()
        .map(|(y, mu)| members[y].iter().map(|x| euclidean(x, mu)).sum::<f64>())
        .sum::<f64>()
        / seqs.len() as f64;

    let k = centroids.len();
    let mut between = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            between += euclidean(&centroids[i].1, &centroids[j].1);
        }
    }
    between *= 2.0 / (k * (k - 1)) as f64;

    Ok(between / (within + eps))
}

/// Leave-one-out 1-NN accuracy (squared Euclidean) over a probe subset.
/// When `n_probe >= N` every sample is probed and the seed is irrelevant.
pub fn loo_1nn_accuracy<S: AsRef<[f64]>>(
    seqs: &[S],
    labels: &[&str],
    n_probe: usize,
    seed: u64,
) -> Result<f64> {
    let n = seqs.len();
    if n < 2 {
        return Err(FetaError::TooFewSamples);
    }
    if labels.len() != n {
        return Err(FetaError::LengthMismatch(format!(
            "{n} sequences but {} labels",
            labels.len()
        )));
    }
    check_equal_lengths(seqs)?;

    let probe: Vec<usize> = if n_probe >= n {
        (0..n).collect()
    } else {
        let mut rng = StdRng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, n, n_probe).into_vec()
    };

    let hits = probe
        .iter()
        .filter(|&&i| {
            let mut best = f64::INFINITY;
            let mut best_j = usize::MAX;
            for j in (0..n).filter(|&j| j != i) {
                let d = squared_euclidean(seqs[i].as_ref(), seqs[j].as_ref());
                if d < best {
                    best = d;
                    best_j = j;
                }
            }
            labels[best_j] == labels[i]
        })
        .count();
    Ok(hits as f64 / probe.len() as f64)
}

/// Population z-scores; all zeros when the spread is negligible.
fn zscores(xs: &[f64]) -> Vec<f64> {
    let (mean, std) = mean_std(xs);
    if std < 1e-12 {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - mean) / std).collect()
}

/// Fuse per-channel scores and sort by fused score (descending, ties by
/// ascending channel index).
pub fn fuse_and_rank(margin: &[f64], loo: &[f64], cfg: &SelectConfig) -> Result<Vec<ChannelScore>> {
    if margin.len() != loo.len() {
        return Err(FetaError::LengthMismatch(format!(
            "{} margin scores but {} accuracy scores",
            margin.len(),
            loo.len()
        )));
    }
    let (zb, zc) = (zscores(margin), zscores(loo));
    let mut scores: Vec<ChannelScore> = (0..margin.len())
        .map(|c| ChannelScore {
            channel: c,
            margin_score: margin[c],
            loo_accuracy: loo[c],
            fused: cfg.alpha * zb[c] + (1.0 - cfg.alpha) * zc[c],
            rank: 0,
        })
        .collect();
    scores.sort_by(|a, b| b.fused.total_cmp(&a.fused).then(a.channel.cmp(&b.channel)));
    for (i, s) in scores.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    Ok(scores)
}

/// Channels selected for reasoning: the first `min(top_m, C)` of a ranking.
pub fn selected_channels(ranking: &[ChannelScore], top_m: usize) -> Vec<usize> {
    ranking.iter().take(top_m).map(|s| s.channel).collect()
}

/// Score every channel of a preprocessed training set and rank them.
/// `per_channel[c]` holds the training sequences of channel `c`.
pub fn rank_channels<S: AsRef<[f64]> + Sync>(
    per_channel: &[Vec<S>],
    labels: &[&str],
    cfg: &SelectConfig,
) -> Result<Vec<ChannelScore>> {
    let raw: Vec<(f64, f64)> = per_channel
        .par_iter()
        .map(|seqs| {
            Ok((
                prototype_margin_score(seqs, labels, cfg.eps)?,
                loo_1nn_accuracy(seqs, labels, cfg.probe_size, cfg.seed)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (margin, loo): (Vec<f64>, Vec<f64>) = raw.into_iter().unzip();
    fuse_and_rank(&margin, &loo, cfg)
}
