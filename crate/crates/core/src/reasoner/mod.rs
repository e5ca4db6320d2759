//! Channel-level decisions from a query and its retrieved exemplars.
//!
//! Three backends share one output type: a remote chat-completion model
//! (`llm`), a deterministic distance-weighted vote (`mock`) for offline
//! runs, and the nearest exemplar's label (`top1`).

mod client;
mod parse;
mod prompt;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use client::{CacheRecord, LlmClient, ResponseCache};
pub use parse::parse_decision;
pub use prompt::{build_joint_prompt, build_prompt, format_value, format_values, JointExemplar, SYSTEM_PROMPT};

use crate::error::{FetaError, Result};
use crate::retrieval::NeighborSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Llm,
    Mock,
    Top1,
}

/// Output of one channel reasoner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDecision {
    /// `None` for a joint decision over all channels.
    pub channel: Option<usize>,
    /// `None` marks an invalid decision, which carries confidence 0.
    pub label: Option<String>,
    pub confidence: f64,
    pub rationale: String,
    pub backend: Backend,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl ChannelDecision {
    pub fn invalid(channel: Option<usize>, backend: Backend, note: String) -> Self {
        Self {
            channel,
            label: None,
            confidence: 0.0,
            rationale: String::new(),
            backend,
            error: Some(note),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.label.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerConfig {
    pub backend: Backend,
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_retries: u32,
    pub timeout_secs: f64,
    pub backoff_base_ms: u64,
    pub backoff_max_ms: u64,
    pub value_decimals: usize,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Mock,
            endpoint: "https://api.deepseek.com/chat/completions".into(),
            model: "deepseek-reasoner".into(),
            api_key_env: "FETA_API_KEY".into(),
            temperature: 0.0,
            top_p: 1.0,
            max_retries: 3,
            timeout_secs: 300.0,
            backoff_base_ms: 1000,
            backoff_max_ms: 30_000,
            value_decimals: 3,
        }
    }
}

impl ReasonerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) {
            return Err(FetaError::Config("temperature must be non-negative".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(FetaError::Config("top_p must lie in (0, 1]".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(FetaError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

const VOTE_OFFSET: f64 = 1e-6;

/// Distance-weighted vote with weights `1 / (d + 1e-6)`; uniform weights
/// when the exemplars carry no distances. Ties go to the lexicographically
/// smallest class.
pub fn mock_reason(neighbors: &NeighborSet) -> Result<ChannelDecision> {
    if neighbors.is_empty() {
        return Err(FetaError::EmptyNeighbors);
    }
    let weighted = neighbors.has_distances();
    let mut per_class: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for n in &neighbors.neighbors {
        let w = match n.distance {
            Some(d) if weighted => 1.0 / (d + VOTE_OFFSET),
            _ => 1.0,
        };
        per_class.entry(n.label.as_str()).or_default().push(w);
    }
    // Sum in a canonical order so the vote does not depend on list order.
    let totals: BTreeMap<&str, f64> = per_class
        .into_iter()
        .map(|(label, mut ws)| {
            ws.sort_by(f64::total_cmp);
            (label, ws.iter().sum())
        })
        .collect();
    let total: f64 = totals.values().sum();
    let (winner, best) = totals
        .iter()
        .fold(None::<(&str, f64)>, |acc, (&label, &w)| match acc {
            Some((_, bw)) if bw >= w => acc,
            _ => Some((label, w)),
        })
        .expect("non-empty");
    let breakdown: Vec<String> = totals.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
    Ok(ChannelDecision {
        channel: Some(neighbors.channel),
        label: Some(winner.to_string()),
        confidence: best / total,
        rationale: format!(
            "{} vote over {} exemplars: {}",
            if weighted { "distance-weighted" } else { "uniform" },
            neighbors.len(),
            breakdown.join(", ")
        ),
        backend: Backend::Mock,
        error: None,
    })
}

/// Label of the first (nearest) exemplar, with full confidence.
pub fn top1_reason(neighbors: &NeighborSet) -> Result<ChannelDecision> {
    let first = neighbors.neighbors.first().ok_or(FetaError::EmptyNeighbors)?;
    Ok(ChannelDecision {
        channel: Some(neighbors.channel),
        label: Some(first.label.clone()),
        confidence: 1.0,
        rationale: format!("nearest exemplar #{} is labelled {}", first.train_index, first.label),
        backend: Backend::Top1,
        error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{SequenceSource, Split};
    use crate::retrieval::{retrieve_neighbors, DtwConfig, Neighbor};
    use crate::ChannelSequence;
    use proptest::prelude::*;
    use regex::Regex;

    fn set(items: &[(&str, Option<f64>)]) -> NeighborSet {
        let neighbors: Vec<Neighbor> = items
            .iter()
            .enumerate()
            .map(|(i, &(label, distance))| Neighbor {
                train_index: i,
                source: SequenceSource {
                    split: Split::Train,
                    series_id: i,
                    channel: 0,
                },
                label: label.to_string(),
                values: vec![i as f64, -(i as f64) / 3.0, 0.5],
                distance,
            })
            .collect();
        let mut histogram = BTreeMap::new();
        for n in &neighbors {
            *histogram.entry(n.label.clone()).or_insert(0) += 1;
        }
        NeighborSet {
            channel: 0,
            neighbors,
            histogram,
        }
    }

    fn classes(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn mock_weighted_vote() {
        let d = mock_reason(&set(&[("A", Some(1.0)), ("A", Some(2.0)), ("B", Some(3.0))])).unwrap();
        let a = 1.0 / (1.0 + 1e-6) + 1.0 / (2.0 + 1e-6);
        let b = 1.0 / (3.0 + 1e-6);
        assert_eq!(d.label.as_deref(), Some("A"));
        assert!((d.confidence - a / (a + b)).abs() < 1e-12);
        assert!((d.confidence - 0.818).abs() < 1e-3);
    }

    #[test]
    fn mock_unanimous_and_tie() {
        let d = mock_reason(&set(&[("A", Some(0.5)), ("A", Some(4.0))])).unwrap();
        assert_eq!((d.label.as_deref(), d.confidence), (Some("A"), 1.0));
        let d = mock_reason(&set(&[("B", Some(1.0)), ("A", Some(1.0))])).unwrap();
        assert_eq!((d.label.as_deref(), d.confidence), (Some("A"), 0.5));
    }

    #[test]
    fn mock_without_distances_is_uniform() {
        let d = mock_reason(&set(&[("B", None), ("A", None), ("B", None)])).unwrap();
        assert_eq!(d.label.as_deref(), Some("B"));
        assert!((d.confidence - 2.0 / 3.0).abs() < 1e-12);
        assert!(d.rationale.starts_with("uniform"));
    }

    #[test]
    fn empty_neighbors() {
        let empty = set(&[]);
        assert!(matches!(mock_reason(&empty), Err(FetaError::EmptyNeighbors)));
        assert!(matches!(top1_reason(&empty), Err(FetaError::EmptyNeighbors)));
        assert!(matches!(
            build_prompt(&[0.0], &empty, &classes(&["a"]), 3),
            Err(FetaError::EmptyNeighbors)
        ));
    }

    #[test]
    fn top1_takes_first() {
        let d = top1_reason(&set(&[("B", Some(0.4)), ("A", Some(0.9)), ("A", Some(1.1))])).unwrap();
        assert_eq!((d.label.as_deref(), d.confidence), (Some("B"), 1.0));
        let d = top1_reason(&set(&[("A", Some(2.0))])).unwrap();
        assert_eq!((d.label.as_deref(), d.confidence), (Some("A"), 1.0));
    }

    #[test]
    fn top1_equals_mock_at_k1() {
        let train: Vec<ChannelSequence> = (0..6)
            .map(|i| ChannelSequence {
                values: vec![i as f64, (i * i) as f64 / 5.0],
                source: SequenceSource {
                    split: Split::Train,
                    series_id: i,
                    channel: 0,
                },
            })
            .collect();
        let labels = ["a", "b", "c", "a", "b", "c"];
        for q in [[0.1, 0.0], [2.2, 1.0], [5.0, 4.9]] {
            let n = retrieve_neighbors(&q, &train, &labels, 1, &DtwConfig::default(), 0).unwrap();
            let (m, t) = (mock_reason(&n).unwrap(), top1_reason(&n).unwrap());
            assert_eq!((m.label, m.confidence), (t.label, t.confidence));
        }
    }

    #[test]
    fn prompt_structure() {
        let n = set(&[("a", Some(0.25)), ("b", Some(1.5)), ("a", Some(2.0))]);
        let cls = classes(&["a", "b", "c"]);
        let p = build_prompt(&[0.1, 0.2, -0.3], &n, &cls, 3).unwrap();
        let stanza = &p[p.find("[Response format]").unwrap()..];
        for c in ["\"a\"", "\"b\"", "\"c\""] {
            assert_eq!(stanza.matches(c).count(), 1, "{c}");
        }
        assert_eq!(p.matches("\nvalues: ").count(), 4);
        assert!(p.contains("All neighbors same label ~ 0.9"));
        assert!(p.contains("\"decision\""));
        assert!(p.contains("\"confidence\": <0.0 to 1.0>"));
        assert!(p.contains("\"reasoning\""));
        assert!(p.contains("DTW distance: 1.500"));
        let order = ["[Retrieved examples]", "[Unlabeled sample]", "[Neighbor label summary]", "[Instruction]", "[Response format]"];
        let pos: Vec<usize> = order.iter().map(|s| p.find(s).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(p, build_prompt(&[0.1, 0.2, -0.3], &n, &cls, 3).unwrap());
    }

    #[test]
    fn prompt_without_distances() {
        let n = set(&[("a", None), ("b", None)]);
        let p = build_prompt(&[0.0], &n, &classes(&["a", "b"]), 3).unwrap();
        assert!(!p.contains("DTW distance"));
    }

    #[test]
    fn negative_zero_is_plain_zero() {
        assert_eq!(format_value(-0.0001, 3), "0.000");
        assert_eq!(format_value(-0.0006, 3), "-0.001");
    }

    proptest! {
        #[test]
        fn prompt_numbers_are_fixed_decimal(query in prop::collection::vec(-50.0f64..50.0, 128)) {
            let n = set(&[("a", Some(0.123456)), ("b", Some(7.0))]);
            let p = build_prompt(&query, &n, &classes(&["a", "b"]), 3).unwrap();
            let line = Regex::new(r"^-?\d+\.\d{1,3}$").unwrap();
            for l in p.lines().filter(|l| l.starts_with("values: ")) {
                for tok in l["values: ".len()..].split(',') {
                    prop_assert!(line.is_match(tok), "{}", tok);
                }
            }
        }

        #[test]
        fn mock_is_permutation_invariant(
            items in prop::collection::vec((0usize..3, 0.0f64..5.0), 1..8),
            rot in 0usize..8,
        ) {
            let names = ["a", "b", "c"];
            let base: Vec<(&str, Option<f64>)> = items.iter().map(|&(c, d)| (names[c], Some(d))).collect();
            let mut rotated = base.clone();
            rotated.rotate_left(rot % base.len());
            let (x, y) = (mock_reason(&set(&base)).unwrap(), mock_reason(&set(&rotated)).unwrap());
            prop_assert_eq!(&x.label, &y.label);
            prop_assert_eq!(x.confidence, y.confidence);
            prop_assert!(x.confidence > 0.0 && x.confidence <= 1.0);
        }
    }
}
