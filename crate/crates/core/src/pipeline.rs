//! End-to-end orchestration: fit the channel ranking on the training split,
//! classify every test series, and write per-sample records plus a summary.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregator::{aggregate, majority_vote, AggregateConfig, FinalDecision, FusionMode};
use crate::channel_select::{rank_channels, selected_channels, ChannelScore, SelectConfig};
use crate::dataset::{load_split, Dataset, LabeledSeries};
use crate::error::{FetaError, Result};
use crate::preprocess::{preprocess_channel, ChannelSequence, PreprocessConfig, Split};
use crate::reasoner::{
    build_joint_prompt, build_prompt, mock_reason, parse_decision, top1_reason, Backend, ChannelDecision,
    JointExemplar, LlmClient, ReasonerConfig,
};
use crate::retrieval::{
    dtw_distance, k_smallest, random_exemplars, retrieve_neighbors, DtwConfig, NeighborSet, NeighborSummary,
};

/// Stages that can be switched off to reproduce the degraded variants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Use every channel instead of the top-ranked ones (one joint prompt
    /// for the llm backend).
    pub decomposer: bool,
    /// Label-wise random exemplars instead of DTW neighbors.
    pub retriever: bool,
    /// Nearest exemplar's label instead of a reasoner call.
    pub reasoner: bool,
    /// Majority vote instead of confidence-weighted fusion.
    pub aggregator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data_root: PathBuf,
    pub dataset: String,
    pub preprocess: PreprocessConfig,
    pub select: SelectConfig,
    pub dtw: DtwConfig,
    pub k_neighbors: usize,
    pub reasoner: ReasonerConfig,
    pub aggregate: AggregateConfig,
    pub ablation: Ablation,
    pub concurrency: usize,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("data"),
            dataset: String::new(),
            preprocess: PreprocessConfig::default(),
            select: SelectConfig::default(),
            dtw: DtwConfig::default(),
            k_neighbors: 3,
            reasoner: ReasonerConfig::default(),
            aggregate: AggregateConfig::default(),
            ablation: Ablation::default(),
            concurrency: 1,
            out_dir: None,
            cache_dir: PathBuf::from(".feta-cache"),
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.select.validate()?;
        self.reasoner.validate()?;
        self.aggregate.validate()?;
        if self.k_neighbors == 0 {
            return Err(FetaError::Config("k-neighbors must be at least 1".into()));
        }
        if self.concurrency == 0 {
            return Err(FetaError::Config("concurrency must be at least 1".into()));
        }
        Ok(())
    }

    fn uses_llm(&self) -> bool {
        self.reasoner.backend == Backend::Llm && !self.ablation.reasoner
    }
}

/// State derived from the training split only.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub classes: Vec<String>,
    pub channel_count: usize,
    pub train_labels: Vec<String>,
    /// `store[c][i]`: preprocessed channel `c` of training series `i`.
    pub store: Vec<Vec<ChannelSequence>>,
    pub ranking: Vec<ChannelScore>,
    /// Channels handed to the reasoners, in rank order.
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess: Duration,
    pub retrieval: Duration,
    pub reasoning: Duration,
    pub aggregation: Duration,
}

impl StageTimings {
    fn add(&mut self, other: &StageTimings) {
        self.preprocess += other.preprocess;
        self.retrieval += other.retrieval;
        self.reasoning += other.reasoning;
        self.aggregation += other.aggregation;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRecord {
    /// `None` for a joint decision over all channels.
    pub channel: Option<usize>,
    pub score: Option<ChannelScore>,
    pub neighbors: NeighborSummary,
    pub decision: ChannelDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub series_id: usize,
    pub true_label: Option<String>,
    pub decision: FinalDecision,
    pub correct: bool,
    pub channels: Vec<ChannelRecord>,
    #[serde(skip)]
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_class: BTreeMap<String, ClassAccuracy>,
    pub null_decisions: usize,
    pub invalid_channel_decisions: usize,
    pub selected_channels: Vec<usize>,
    pub channel_ranking: Vec<ChannelScore>,
    pub config: RunConfig,
    #[serde(skip)]
    pub timings: StageTimings,
}

impl RunReport {
    fn assemble(dataset: &str, fitted: &FittedModel, results: &[SampleResult], cfg: &RunConfig) -> Self {
        let mut per_class: BTreeMap<String, ClassAccuracy> = BTreeMap::new();
        let mut timings = StageTimings::default();
        for r in results {
            timings.add(&r.timings);
            if let Some(y) = &r.true_label {
                let e = per_class.entry(y.clone()).or_insert(ClassAccuracy {
                    correct: 0,
                    total: 0,
                    accuracy: 0.0,
                });
                e.total += 1;
                e.correct += usize::from(r.correct);
            }
        }
        for e in per_class.values_mut() {
            e.accuracy = e.correct as f64 / e.total as f64;
        }
        let correct = results.iter().filter(|r| r.correct).count();
        Self {
            dataset: dataset.to_string(),
            total: results.len(),
            correct,
            accuracy: if results.is_empty() {
                0.0
            } else {
                correct as f64 / results.len() as f64
            },
            per_class,
            null_decisions: results
                .iter()
                .filter(|r| r.decision.mode == FusionMode::Null)
                .count(),
            invalid_channel_decisions: results
                .iter()
                .flat_map(|r| &r.channels)
                .filter(|c| !c.decision.is_valid())
                .count(),
            selected_channels: fitted.selected.clone(),
            channel_ranking: fitted.ranking.clone(),
            config: cfg.clone(),
            timings,
        }
    }
}

/// Runs the pipeline under one configuration.
pub struct Runner {
    cfg: RunConfig,
    client: Option<LlmClient>,
    pool: rayon::ThreadPool,
}

fn sample_seed(seed: u64, series_id: usize, channel: usize) -> u64 {
    seed ^ (series_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (channel as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

impl Runner {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let client = cfg
            .uses_llm()
            .then(|| LlmClient::new(cfg.reasoner.clone(), cfg.cache_dir.clone()));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.concurrency)
            .build()
            .map_err(|e| FetaError::Config(e.to_string()))?;
        Ok(Self { cfg, client, pool })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    /// HTTP requests issued by the llm backend so far.
    pub fn network_calls(&self) -> usize {
        self.client.as_ref().map_or(0, LlmClient::network_calls)
    }

    /// Preprocess the training split and rank its channels.
    pub fn fit(&self, train: &[LabeledSeries], classes: &[String]) -> Result<FittedModel> {
        let first = train.first().ok_or(FetaError::EmptyTrainSet)?;
        let channel_count = first.channel_count();
        let train_labels = train
            .iter()
            .enumerate()
            .map(|(i, s)| s.label.clone().ok_or(FetaError::MissingLabel { line: i + 1 }))
            .collect::<Result<Vec<_>>>()?;

        let pre = &self.cfg.preprocess;
        let store = self.pool.install(|| {
            (0..channel_count)
                .into_par_iter()
                .map(|c| {
                    train
                        .iter()
                        .map(|s| preprocess_channel(s, c, Split::Train, pre))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let labels: Vec<&str> = train_labels.iter().map(String::as_str).collect();
        let select = SelectConfig {
            seed: self.cfg.seed,
            ..self.cfg.select
        };
        let ranking = self.pool.install(|| rank_channels(&store, &labels, &select))?;
        let selected = if self.cfg.ablation.decomposer {
            (0..channel_count).collect()
        } else {
            selected_channels(&ranking, select.top_m)
        };
        let mut classes = classes.to_vec();
        classes.sort();
        classes.dedup();
        Ok(FittedModel {
            classes,
            channel_count,
            train_labels,
            store,
            ranking,
            selected,
        })
    }

    fn reason(&self, query: &[f64], neighbors: &NeighborSet, fitted: &FittedModel) -> Result<ChannelDecision> {
        if self.cfg.ablation.reasoner {
            return top1_reason(neighbors);
        }
        match self.cfg.reasoner.backend {
            Backend::Mock => mock_reason(neighbors),
            Backend::Top1 => top1_reason(neighbors),
            Backend::Llm => {
                let prompt = build_prompt(query, neighbors, &fitted.classes, self.cfg.reasoner.value_decimals)?;
                Ok(self.call_llm(&prompt, &fitted.classes, Some(neighbors.channel)))
            }
        }
    }

    fn call_llm(&self, prompt: &str, classes: &[String], channel: Option<usize>) -> ChannelDecision {
        let client = self.client.as_ref().expect("llm client is built for the llm backend");
        match client.complete(prompt) {
            Ok(text) => parse_decision(&text, classes, channel),
            Err(e) => {
                tracing::warn!(?channel, error = %e, "reasoner call failed; treating channel as invalid");
                ChannelDecision::invalid(channel, Backend::Llm, e.to_string())
            }
        }
    }

    fn channel_record(
        &self,
        series: &LabeledSeries,
        channel: usize,
        fitted: &FittedModel,
    ) -> Result<(ChannelRecord, StageTimings)> {
        let mut t = StageTimings::default();
        let clock = Instant::now();
        let query = preprocess_channel(series, channel, Split::Test, &self.cfg.preprocess)?;
        t.preprocess = clock.elapsed();

        let clock = Instant::now();
        let pool = &fitted.store[channel];
        let neighbors = if self.cfg.ablation.retriever {
            let seed = sample_seed(self.cfg.seed, series.series_id, channel);
            random_exemplars(pool, &fitted.train_labels, self.cfg.k_neighbors, seed, channel)?
        } else {
            retrieve_neighbors(
                &query.values,
                pool,
                &fitted.train_labels,
                self.cfg.k_neighbors,
                &self.cfg.dtw,
                channel,
            )?
        };
        t.retrieval = clock.elapsed();

        let clock = Instant::now();
        let decision = self.reason(&query.values, &neighbors, fitted)?;
        t.reasoning = clock.elapsed();

        Ok((
            ChannelRecord {
                channel: Some(channel),
                score: fitted.ranking.iter().find(|s| s.channel == channel).copied(),
                neighbors: neighbors.summary(),
                decision,
            },
            t,
        ))
    }

    /// All channels in one prompt, exemplars ranked by summed per-channel DTW.
    fn joint_record(&self, series: &LabeledSeries, fitted: &FittedModel) -> Result<(ChannelRecord, StageTimings)> {
        let mut t = StageTimings::default();
        let clock = Instant::now();
        let query = (0..fitted.channel_count)
            .map(|c| preprocess_channel(series, c, Split::Test, &self.cfg.preprocess))
            .collect::<Result<Vec<_>>>()?;
        t.preprocess = clock.elapsed();

        let clock = Instant::now();
        let n_train = fitted.train_labels.len();
        let picked: Vec<(Option<f64>, usize)> = if self.cfg.ablation.retriever {
            let seed = sample_seed(self.cfg.seed, series.series_id, usize::MAX);
            random_exemplars(&fitted.store[0], &fitted.train_labels, self.cfg.k_neighbors, seed, 0)?
                .neighbors
                .iter()
                .map(|n| (None, n.train_index))
                .collect()
        } else {
            let scored = (0..n_train)
                .map(|i| {
                    let mut total = 0.0;
                    for (c, q) in query.iter().enumerate() {
                        total += dtw_distance(&q.values, &fitted.store[c][i].values, &self.cfg.dtw)?;
                    }
                    Ok((total, i))
                })
                .collect::<Result<Vec<_>>>()?;
            k_smallest(scored, self.cfg.k_neighbors)
                .into_iter()
                .map(|(d, i)| (Some(d), i))
                .collect()
        };
        t.retrieval = clock.elapsed();

        let clock = Instant::now();
        let exemplars: Vec<JointExemplar<'_>> = picked
            .iter()
            .map(|&(distance, i)| JointExemplar {
                label: &fitted.train_labels[i],
                distance,
                channels: fitted.store.iter().map(|ch| ch[i].values.as_slice()).collect(),
            })
            .collect();
        let query_values: Vec<&[f64]> = query.iter().map(|q| q.values.as_slice()).collect();
        let prompt = build_joint_prompt(&query_values, &exemplars, &fitted.classes, self.cfg.reasoner.value_decimals)?;
        let decision = self.call_llm(&prompt, &fitted.classes, None);
        t.reasoning = clock.elapsed();

        let mut histogram = BTreeMap::new();
        for e in &exemplars {
            *histogram.entry(e.label.to_string()).or_insert(0) += 1;
        }
        let summary = NeighborSummary {
            labels: exemplars.iter().map(|e| e.label.to_string()).collect(),
            distances: picked.iter().map(|p| p.0).collect(),
            train_indices: picked.iter().map(|p| p.1).collect(),
            histogram,
        };
        Ok((
            ChannelRecord {
                channel: None,
                score: None,
                neighbors: summary,
                decision,
            },
            t,
        ))
    }

    /// Classify one test series against a fitted training state.
    pub fn classify_sample(&self, series: &LabeledSeries, fitted: &FittedModel) -> Result<SampleResult> {
        if series.channel_count() != fitted.channel_count {
            return Err(FetaError::ChannelOutOfRange {
                channel: fitted.channel_count.saturating_sub(1),
                channels: series.channel_count(),
            });
        }
        let joint = self.cfg.ablation.decomposer && self.cfg.uses_llm();
        let outputs: Vec<(ChannelRecord, StageTimings)> = if joint {
            vec![self.joint_record(series, fitted)?]
        } else {
            fitted
                .selected
                .par_iter()
                .map(|&c| self.channel_record(series, c, fitted))
                .collect::<Result<Vec<_>>>()?
        };

        let mut timings = StageTimings::default();
        let mut channels = Vec::with_capacity(outputs.len());
        for (record, t) in outputs {
            timings.add(&t);
            channels.push(record);
        }

        let clock = Instant::now();
        let decisions: Vec<ChannelDecision> = channels.iter().map(|r| r.decision.clone()).collect();
        let decision = if self.cfg.ablation.aggregator {
            majority_vote(&decisions, &fitted.classes)?
        } else {
            aggregate(&decisions, &fitted.classes, &self.cfg.aggregate)?
        };
        timings.aggregation = clock.elapsed();

        let correct = matches!((&decision.label, &series.label), (Some(p), Some(y)) if p == y);
        Ok(SampleResult {
            series_id: series.series_id,
            true_label: series.label.clone(),
            decision,
            correct,
            channels,
            timings,
        })
    }

    /// Fit on the training split and classify every test series.
    pub fn run(&self, dataset: &Dataset) -> Result<(RunReport, Vec<SampleResult>)> {
        let fitted = self.fit(&dataset.train, &dataset.classes)?;
        let results = self.pool.install(|| {
            dataset
                .test
                .par_iter()
                .map(|s| self.classify_sample(s, &fitted))
                .collect::<Result<Vec<_>>>()
        })?;
        let report = RunReport::assemble(&dataset.name, &fitted, &results, &self.cfg);
        Ok((report, results))
    }
}

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";

/// One JSON line per sample, in test-split order.
pub fn predictions_jsonl(results: &[SampleResult]) -> Result<String> {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r).map_err(|e| FetaError::Config(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| FetaError::io(path, e))?;
    f.write_all(contents).map_err(|e| FetaError::io(path, e))
}

/// Write predictions, the summary, and stage timings into `dir`. Timings go
/// to their own file so that the other two are reproducible byte for byte.
pub fn write_outputs(dir: &Path, report: &RunReport, results: &[SampleResult]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FetaError::io(dir, e))?;
    write_file(&dir.join(PREDICTIONS_FILE), predictions_jsonl(results)?.as_bytes())?;
    let mut summary = serde_json::to_string_pretty(report).map_err(|e| FetaError::Config(e.to_string()))?;
    summary.push('\n');
    write_file(&dir.join(SUMMARY_FILE), summary.as_bytes())?;
    let secs = |d: Duration| d.as_secs_f64();
    let timing = serde_json::json!({
        "samples": results.len(),
        "preprocess_secs": secs(report.timings.preprocess),
        "retrieval_secs": secs(report.timings.retrieval),
        "reasoning_secs": secs(report.timings.reasoning),
        "aggregation_secs": secs(report.timings.aggregation),
    });
    write_file(&dir.join(TIMING_FILE), format!("{timing:#}\n").as_bytes())
}

/// Load the configured dataset, run it, and write outputs when an output
/// directory is set.
pub fn evaluate(cfg: &RunConfig) -> Result<RunReport> {
    let dataset = load_split(&cfg.data_root, &cfg.dataset)?;
    evaluate_dataset(&dataset, cfg)
}

pub fn evaluate_dataset(dataset: &Dataset, cfg: &RunConfig) -> Result<RunReport> {
    let runner = Runner::new(cfg.clone())?;
    let (report, results) = runner.run(dataset)?;
    if let Some(dir) = &cfg.out_dir {
        write_outputs(dir, &report, &results)?;
    }
    Ok(report)
}
