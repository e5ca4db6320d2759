//! Training-free multivariate time-series classification.
//!
//! The pipeline ranks channels on the training split, retrieves the
//! DTW-nearest labelled exemplars for each selected channel of a query,
//! asks a reasoner for a per-channel label and confidence, and fuses the
//! channel decisions into one prediction.

// `!(x > 0.0)` in config checks is deliberate: it rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aggregator;
pub mod channel_select;
pub mod dataset;
pub mod error;
pub mod pipeline;
pub mod preprocess;
pub mod reasoner;
pub mod retrieval;
pub mod synthetic;

pub use aggregator::{aggregate, majority_vote, AggregateConfig, FinalDecision, FusionMode};
pub use channel_select::{ChannelScore, SelectConfig};
pub use dataset::{load_split, parse_ts_text, Dataset, LabeledSeries, SeriesLength, TsFile};
pub use error::{FetaError, Result};
pub use preprocess::{ChannelSequence, PreprocessConfig, Split};
pub use reasoner::{Backend, ChannelDecision, ReasonerConfig};
pub use retrieval::{DtwConfig, NeighborSet};
