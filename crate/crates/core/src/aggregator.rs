//! Fusion of channel decisions into one prediction.
//!
//! Invalid decisions are dropped first. If every remaining decision agrees
//! the fused confidence is `1 - prod(1 - w_c)`, capped at 0.99. Otherwise
//! each decision adds its clipped confidence to its own class and a small
//! smoothing weight to every other class; the arg-max class wins with its
//! share of the total score as confidence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{FetaError, Result};
use crate::reasoner::ChannelDecision;

pub const CONSENSUS_CAP: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateConfig {
    pub clip_lo: f64,
    pub clip_hi: f64,
    pub smoothing_eps: f64,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        Self {
            clip_lo: 0.05,
            clip_hi: 0.95,
            smoothing_eps: 0.01,
        }
    }
}

impl AggregateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.clip_lo && self.clip_lo < self.clip_hi && self.clip_hi < 1.0) {
            return Err(FetaError::Config("clip bounds must satisfy 0 < lo < hi < 1".into()));
        }
        if !(self.smoothing_eps > 0.0) {
            return Err(FetaError::Config("smoothing eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Consensus,
    Weighted,
    Majority,
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalDecision {
    pub label: Option<String>,
    pub confidence: f64,
    pub mode: FusionMode,
    /// Normalized per-class scores; filled in weighted mode only.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub per_class_scores: BTreeMap<String, f64>,
}

impl FinalDecision {
    pub fn null() -> Self {
        Self {
            label: None,
            confidence: 0.0,
            mode: FusionMode::Null,
            per_class_scores: BTreeMap::new(),
        }
    }
}

/// Valid (label, confidence) pairs in a canonical order, so that results do
/// not depend on the order channels finished in.
fn valid_votes<'a>(decisions: &'a [ChannelDecision], classes: &[String]) -> Vec<(&'a str, f64)> {
    let mut votes: Vec<(&str, f64)> = decisions
        .iter()
        .filter_map(|d| {
            let label = d.label.as_deref()?;
            classes.iter().any(|c| c == label).then_some((label, d.confidence))
        })
        .collect();
    votes.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
    votes
}

fn sorted_classes(classes: &[String]) -> Vec<&str> {
    let mut sorted: Vec<&str> = classes.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    sorted.dedup();
    sorted
}

/// Scores this close (relative) count as tied. Sums of the same terms in a
/// different order can disagree in the last bits.
const TIE_TOLERANCE: f64 = 1e-12;

/// First class (in lexicographic order) holding the maximum score.
fn argmax<'a>(scores: &BTreeMap<&'a str, f64>) -> (&'a str, f64) {
    let max = scores.values().copied().fold(f64::NEG_INFINITY, f64::max);
    scores
        .iter()
        .find(|(_, &s)| s >= max - TIE_TOLERANCE * max.abs())
        .map(|(&y, &s)| (y, s))
        .expect("class set is non-empty")
}

pub fn aggregate(
    decisions: &[ChannelDecision],
    classes: &[String],
    cfg: &AggregateConfig,
) -> Result<FinalDecision> {
    if classes.is_empty() {
        return Err(FetaError::EmptyClassSet);
    }
    let votes = valid_votes(decisions, classes);
    let Some(&(first, _)) = votes.first() else {
        return Ok(FinalDecision::null());
    };

    if votes.iter().all(|&(y, _)| y == first) {
        let miss: f64 = votes.iter().map(|&(_, w)| 1.0 - w).product();
        return Ok(FinalDecision {
            label: Some(first.to_string()),
            confidence: (1.0 - miss).min(CONSENSUS_CAP),
            mode: FusionMode::Consensus,
            per_class_scores: BTreeMap::new(),
        });
    }

    let mut scores: BTreeMap<&str, f64> = sorted_classes(classes).into_iter().map(|y| (y, 0.0)).collect();
    for &(label, w) in &votes {
        let clipped = w.clamp(cfg.clip_lo, cfg.clip_hi);
        for (&y, s) in scores.iter_mut() {
            *s += if y == label { clipped } else { cfg.smoothing_eps };
        }
    }
    let total: f64 = scores.values().sum();
    let (winner, best) = argmax(&scores);
    Ok(FinalDecision {
        label: Some(winner.to_string()),
        confidence: best / total,
        mode: FusionMode::Weighted,
        per_class_scores: scores.iter().map(|(y, s)| (y.to_string(), s / total)).collect(),
    })
}

/// Plain plurality vote; confidence is the winning share of valid votes.
pub fn majority_vote(decisions: &[ChannelDecision], classes: &[String]) -> Result<FinalDecision> {
    if classes.is_empty() {
        return Err(FetaError::EmptyClassSet);
    }
    let votes = valid_votes(decisions, classes);
    if votes.is_empty() {
        return Ok(FinalDecision::null());
    }
    let mut counts: BTreeMap<&str, f64> = BTreeMap::new();
    for &(y, _) in &votes {
        *counts.entry(y).or_insert(0.0) += 1.0;
    }
    let (winner, count) = argmax(&counts);
    Ok(FinalDecision {
        label: Some(winner.to_string()),
        confidence: count / votes.len() as f64,
        mode: FusionMode::Majority,
        per_class_scores: BTreeMap::new(),
    })
}
