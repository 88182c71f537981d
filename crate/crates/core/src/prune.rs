//! Gradient importance for attention heads, mask-based pruning, and
//! before/after comparison of pruned checkpoints.
//!
//! A head's importance is the expected magnitude of the loss gradient at its
//! attention output: for each example the model runs forward, the loss runs
//! backward, and the absolute gradient at the head's context tensor is
//! averaged over real (unpadded) positions and head dimensions. Averaging or
//! summing those per-example values over the example set gives the grid.
//! Scoring reads the model; it never writes a parameter.
//!
//! Pruning turns gates off. Parameters are untouched, so a pruned head can be
//! re-enabled by flipping its gate back on, and a pruned checkpoint differs
//! from its original only in the mask.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusRecord, Task};
use crate::graph::Graph;
use crate::metrics::{self, EvalReport, MetricsError};
use crate::model::{bce_loss, ForwardOptions, Model, ModelError};
use crate::train::{self, Checkpoint, Example, TrainError};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum PruneError {
    NoExamples,
    NonFiniteGradient {
        example_id: String,
    },
    GridShape {
        expected_layers: usize,
        expected_heads: usize,
        found_layers: usize,
        found_heads: usize,
    },
    BadThreshold {
        value: f64,
    },
    BadEpsilon {
        value: f64,
    },
    BadSourceSplit {
        value: String,
    },
    BadReduction {
        value: String,
    },
    VocabMismatch,
    TaskMismatch {
        original: Task,
        pruned: Task,
    },
    ConfigMismatch,
    Model(ModelError),
    Metrics(MetricsError),
    Train(TrainError),
}

impl core::fmt::Display for PruneError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PruneError::NoExamples => write!(f, "no examples to score"),
            PruneError::NonFiniteGradient { example_id } => {
                write!(f, "non-finite head gradient on example {example_id}")
            }
            PruneError::GridShape {
                expected_layers,
                expected_heads,
                found_layers,
                found_heads,
            } => write!(
                f,
                "importance grid is {found_layers}x{found_heads} but the model \
                 has {expected_layers} layers of {expected_heads} heads"
            ),
            PruneError::BadThreshold { value } => {
                write!(f, "threshold must be finite and non-negative, got {value}")
            }
            PruneError::BadEpsilon { value } => {
                write!(f, "epsilon must be finite and non-negative, got {value}")
            }
            PruneError::BadSourceSplit { value } => {
                write!(f, "unknown split '{value}', expected train, validation, or test")
            }
            PruneError::BadReduction { value } => {
                write!(f, "unknown reduction '{value}', expected mean or sum")
            }
            PruneError::VocabMismatch => {
                write!(f, "checkpoints were trained with different vocabularies")
            }
            PruneError::TaskMismatch { original, pruned } => write!(
                f,
                "checkpoints target different tasks: {original} vs {pruned}"
            ),
            PruneError::ConfigMismatch => {
                write!(f, "checkpoints hold different model configurations")
            }
            PruneError::Model(e) => write!(f, "model error: {e}"),
            PruneError::Metrics(e) => write!(f, "metrics error: {e}"),
            PruneError::Train(e) => write!(f, "encoding error: {e}"),
        }
    }
}

impl core::error::Error for PruneError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            PruneError::Model(e) => Some(e),
            PruneError::Metrics(e) => Some(e),
            PruneError::Train(e) => Some(e),
            _ => None,
        }
    }
}

impl From<ModelError> for PruneError {
    fn from(e: ModelError) -> Self {
        PruneError::Model(e)
    }
}

impl From<MetricsError> for PruneError {
    fn from(e: MetricsError) -> Self {
        PruneError::Metrics(e)
    }
}

impl From<TrainError> for PruneError {
    fn from(e: TrainError) -> Self {
        PruneError::Train(e)
    }
}

// ---------------------------------------------------------------------------
// Importance scoring
// ---------------------------------------------------------------------------

/// Which split the scored examples came from. Recorded in the grid so a
/// stored grid names its provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceSplit {
    Train,
    Validation,
    Test,
}

impl core::fmt::Display for SourceSplit {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SourceSplit::Train => write!(f, "train"),
            SourceSplit::Validation => write!(f, "validation"),
            SourceSplit::Test => write!(f, "test"),
        }
    }
}

impl core::str::FromStr for SourceSplit {
    type Err = PruneError;

    fn from_str(s: &str) -> Result<Self, PruneError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(SourceSplit::Train),
            "validation" => Ok(SourceSplit::Validation),
            "test" => Ok(SourceSplit::Test),
            _ => Err(PruneError::BadSourceSplit {
                value: String::from(s),
            }),
        }
    }
}

/// How per-example importance values combine across the example set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreReduction {
    Mean,
    Sum,
}

impl core::fmt::Display for ScoreReduction {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ScoreReduction::Mean => write!(f, "mean"),
            ScoreReduction::Sum => write!(f, "sum"),
        }
    }
}

impl core::str::FromStr for ScoreReduction {
    type Err = PruneError;

    fn from_str(s: &str) -> Result<Self, PruneError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(ScoreReduction::Mean),
            "sum" => Ok(ScoreReduction::Sum),
            _ => Err(PruneError::BadReduction {
                value: String::from(s),
            }),
        }
    }
}

/// Head-importance scores with their provenance. `scores[layer][head]` is
/// non-negative; a head with no influence on the loss scores exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceGrid {
    pub scores: Vec<Vec<f64>>,
    pub n_examples: usize,
    pub task: Task,
    pub source_split: SourceSplit,
    pub reduction: ScoreReduction,
}

impl ImportanceGrid {
    pub fn n_layers(&self) -> usize {
        self.scores.len()
    }

    pub fn n_heads(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    /// Smallest and largest score in the grid.
    pub fn score_range(&self) -> Option<(f64, f64)> {
        let mut range: Option<(f64, f64)> = None;
        for row in &self.scores {
            for &v in row {
                range = Some(match range {
                    None => (v, v),
                    Some((lo, hi)) => (lo.min(v), hi.max(v)),
                });
            }
        }
        range
    }
}

/// Score every head of `model` over `examples`.
///
/// Each example gets its own forward and backward pass, so the per-example
/// gradient magnitudes are taken before any averaging. The model is read,
/// never written: two calls on the same inputs produce identical grids and
/// leave every parameter bit untouched.
pub fn score_heads(
    model: &Model,
    examples: &[Example],
    source_split: SourceSplit,
    reduction: ScoreReduction,
    task: Task,
) -> Result<ImportanceGrid, PruneError> {
    if examples.is_empty() {
        return Err(PruneError::NoExamples);
    }
    let n_layers = model.config.n_layers;
    let n_heads = model.config.n_heads;
    let d_head = model.config.d_head();
    let mut acc = alloc::vec![alloc::vec![0.0f64; n_heads]; n_layers];
    let opts = ForwardOptions {
        retain_heads: true,
        head_override: None,
    };
    for ex in examples {
        let mut g = Graph::new();
        let binding = model.bind(&mut g)?;
        let detail = model.forward(&mut g, &binding, &ex.tokens, &ex.mask, &opts, None)?;
        let loss = bce_loss(&mut g, detail.prob, ex.label)?;
        g.backward(loss).map_err(ModelError::Graph)?;
        let real_len = detail.n_real * d_head;
        for (l, row) in acc.iter_mut().enumerate() {
            for (h, slot) in row.iter_mut().enumerate() {
                let grad = g
                    .grad(detail.head_ctx[l][h])
                    .expect("retained head context has a gradient");
                let mut total = 0.0;
                for &v in &grad[..real_len] {
                    if !v.is_finite() {
                        return Err(PruneError::NonFiniteGradient {
                            example_id: ex.id.clone(),
                        });
                    }
                    total += v.abs();
                }
                *slot += total / real_len as f64;
            }
        }
    }
    if reduction == ScoreReduction::Mean {
        let n = examples.len() as f64;
        for row in acc.iter_mut() {
            for v in row.iter_mut() {
                *v /= n;
            }
        }
    }
    Ok(ImportanceGrid {
        scores: acc,
        n_examples: examples.len(),
        task,
        source_split,
        reduction,
    })
}

// ---------------------------------------------------------------------------
// Pruning
// ---------------------------------------------------------------------------

/// What a prune call decided: every head at or below the threshold band is
/// off in the result, and `retained_count + pruned_heads.len()` always equals
/// `total_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub threshold: f64,
    pub epsilon: f64,
    /// All gated-off `(layer, head)` pairs in the pruned model, ascending.
    pub pruned_heads: Vec<(usize, usize)>,
    pub retained_count: usize,
    pub total_count: usize,
}

/// Gate off every head whose score is at most `threshold + epsilon`.
///
/// Returns the pruned model and the report. Parameters are cloned verbatim;
/// heads already off in the input mask stay off regardless of score.
pub fn prune(
    model: &Model,
    grid: &ImportanceGrid,
    threshold: f64,
    epsilon: f64,
) -> Result<(Model, PruneReport), PruneError> {
    prune_scores(model, &grid.scores, threshold, epsilon)
}

/// [`prune`] on a bare score matrix, for callers holding scores without the
/// provenance fields (a parsed CSV, for example).
pub fn prune_scores(
    model: &Model,
    scores: &[Vec<f64>],
    threshold: f64,
    epsilon: f64,
) -> Result<(Model, PruneReport), PruneError> {
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(PruneError::BadThreshold { value: threshold });
    }
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(PruneError::BadEpsilon { value: epsilon });
    }
    let n_layers = model.config.n_layers;
    let n_heads = model.config.n_heads;
    let ragged = scores.iter().find(|row| row.len() != n_heads).map(|r| r.len());
    if scores.len() != n_layers || ragged.is_some() {
        return Err(PruneError::GridShape {
            expected_layers: n_layers,
            expected_heads: n_heads,
            found_layers: scores.len(),
            found_heads: ragged.unwrap_or_else(|| scores.first().map_or(0, Vec::len)),
        });
    }
    let mut mask = model.head_mask.clone();
    for (l, row) in scores.iter().enumerate() {
        for (h, &score) in row.iter().enumerate() {
            if score <= threshold + epsilon {
                mask.set(l, h, false)?;
            }
        }
    }
    let pruned_model = Model::from_parts(model.config.clone(), model.params.clone(), mask)?;
    let report = PruneReport {
        threshold,
        epsilon,
        pruned_heads: pruned_model.head_mask.pruned_heads(),
        retained_count: pruned_model.head_mask.retained(),
        total_count: n_layers * n_heads,
    };
    Ok((pruned_model, report))
}

// ---------------------------------------------------------------------------
// Checkpoint comparison
// ---------------------------------------------------------------------------

/// Metric differences, pruned minus original.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
}

/// Side-by-side evaluation of an original and a pruned checkpoint on the
/// same records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub original: EvalReport,
    pub pruned: EvalReport,
    pub deltas: MetricDeltas,
}

/// Evaluate both checkpoints on `records` and report the metric deltas.
///
/// The checkpoints must share the vocabulary, task, and model configuration;
/// anything else would compare unrelated runs. A pruned checkpoint whose mask
/// turned nothing off reproduces the original predictions, so every delta is
/// exactly zero.
pub fn compare(
    original: &Checkpoint,
    pruned: &Checkpoint,
    records: &[CorpusRecord],
) -> Result<Comparison, PruneError> {
    if original.vocab.pieces() != pruned.vocab.pieces() {
        return Err(PruneError::VocabMismatch);
    }
    if original.task != pruned.task {
        return Err(PruneError::TaskMismatch {
            original: original.task,
            pruned: pruned.task,
        });
    }
    if original.model_config != pruned.model_config {
        return Err(PruneError::ConfigMismatch);
    }
    if records.is_empty() {
        return Err(PruneError::NoExamples);
    }
    let examples = train::encode(
        records,
        &original.vocab,
        original.model_config.max_len,
        original.task,
    )?;
    let batch = original.train_config.batch_size.max(1);
    let before = metrics::evaluate_model(&original.to_model()?, &examples, original.task, batch)?;
    let after = metrics::evaluate_model(&pruned.to_model()?, &examples, pruned.task, batch)?;
    let deltas = MetricDeltas {
        precision: after.precision - before.precision,
        recall: after.recall - before.recall,
        f1: after.f1 - before.f1,
        accuracy: after.accuracy - before.accuracy,
        macro_precision: after.macro_precision - before.macro_precision,
        macro_recall: after.macro_recall - before.macro_recall,
        weighted_precision: after.weighted_precision - before.weighted_precision,
        weighted_recall: after.weighted_recall - before.weighted_recall,
    };
    Ok(Comparison {
        original: before,
        pruned: after,
        deltas,
    })
}
