//! Training, head-importance scoring, and pruning for a compact figurative-language
//! classifier: a transformer encoder feeding a bidirectional LSTM and a sigmoid head.
//!
//! Everything in this crate is deterministic: fixed seeds, fixed accumulation order,
//! no threads. Two runs with the same inputs produce bitwise-identical parameters,
//! scores, and rendered reports. File IO lives in the companion CLI crate; this crate
//! only computes and renders to strings, and builds without `std` when the `libm`
//! feature supplies the float math.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("enable at least one of the `std` or `libm` features");

pub mod corpus;
pub mod encoder;
pub mod gradcheck;
pub mod graph;
pub mod lstm;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod params;
pub mod prune;
pub mod report;
pub mod tokenizer;
pub mod train;

pub use corpus::{CorpusError, CorpusRecord, Split, Task};
pub use graph::{Graph, GraphError, TensorId};
pub use metrics::{ConfusionCounts, EvalReport, MetricsError};
pub use model::{HeadMask, Model, ModelConfig, ModelError};
pub use params::{ParamError, ParamSet, Parameter};
pub use prune::{
    Comparison, ImportanceGrid, MetricDeltas, PruneError, PruneReport, ScoreReduction,
    SourceSplit,
};
pub use report::{ColorScale, HeatmapSpec, ReportError, RunSummary};
pub use tokenizer::{TokenizerError, Vocabulary};
pub use train::{Checkpoint, EpochStats, Example, TrainConfig, TrainError};
