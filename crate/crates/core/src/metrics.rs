//! Confusion-matrix metrics: positive-class precision/recall/F1, accuracy,
//! and macro / support-weighted averages over both classes.
//!
//! Any metric whose denominator is empty is defined as 0.0 and listed in the
//! report's `zero_denominator` field, so degenerate label sets still produce
//! a total report.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::Task;
use crate::graph::Graph;
use crate::model::{Model, ModelError};
use crate::train::Example;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    LengthMismatch { predictions: usize, gold: usize },
    Empty,
    Model(ModelError),
}

impl core::fmt::Display for MetricsError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MetricsError::LengthMismatch { predictions, gold } => write!(
                f,
                "{predictions} predictions cannot pair with {gold} gold labels"
            ),
            MetricsError::Empty => write!(f, "no examples to evaluate"),
            MetricsError::Model(e) => write!(f, "model error: {e}"),
        }
    }
}

impl core::error::Error for MetricsError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            MetricsError::Model(e) => Some(e),
            _ => None,
        }
    }
}

impl From<ModelError> for MetricsError {
    fn from(e: ModelError) -> Self {
        MetricsError::Model(e)
    }
}

/// Counts partitioning an evaluated example set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

/// Pair predictions with gold labels. `true` is the positive class.
pub fn confusion(predictions: &[bool], gold: &[bool]) -> Result<ConfusionCounts, MetricsError> {
    if predictions.len() != gold.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut counts = ConfusionCounts {
        true_positive: 0,
        false_positive: 0,
        true_negative: 0,
        false_negative: 0,
    };
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p, g) {
            (true, true) => counts.true_positive += 1,
            (true, false) => counts.false_positive += 1,
            (false, false) => counts.true_negative += 1,
            (false, true) => counts.false_negative += 1,
        }
    }
    Ok(counts)
}

/// The eight reported metrics plus provenance. Stored at full precision;
/// rendering rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub counts: ConfusionCounts,
    pub task: Task,
    pub n: usize,
    /// Metrics whose denominator was empty and were defined as 0.0.
    pub zero_denominator: Vec<String>,
}

fn ratio(num: usize, den: usize, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(String::from(name));
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Derive every reported metric from the counts.
pub fn metrics(counts: ConfusionCounts, task: Task) -> Result<EvalReport, MetricsError> {
    let total = counts.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let tp = counts.true_positive;
    let fp = counts.false_positive;
    let tn = counts.true_negative;
    let fn_count = counts.false_negative;
    let mut flags = Vec::new();
    let precision = ratio(tp, tp + fp, "precision", &mut flags);
    let recall = ratio(tp, tp + fn_count, "recall", &mut flags);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        flags.push(String::from("f1"));
        0.0
    };
    let accuracy = (tp + tn) as f64 / total as f64;
    let neg_precision = ratio(tn, tn + fn_count, "negative precision", &mut flags);
    let neg_recall = ratio(tn, tn + fp, "negative recall", &mut flags);
    let pos_support = (tp + fn_count) as f64;
    let neg_support = (tn + fp) as f64;
    Ok(EvalReport {
        precision,
        recall,
        f1,
        accuracy,
        macro_precision: (precision + neg_precision) / 2.0,
        macro_recall: (recall + neg_recall) / 2.0,
        weighted_precision: (pos_support * precision + neg_support * neg_precision)
            / total as f64,
        weighted_recall: (pos_support * recall + neg_support * neg_recall) / total as f64,
        counts,
        task,
        n: total,
        zero_denominator: flags,
    })
}

/// Model predictions over `examples`, batched into shared graphs.
pub fn predictions(
    model: &Model,
    examples: &[Example],
    batch_size: usize,
) -> Result<Vec<bool>, MetricsError> {
    let chunk = batch_size.max(1);
    let mut out = Vec::with_capacity(examples.len());
    for batch in examples.chunks(chunk) {
        let mut g = Graph::new();
        let binding = model.bind(&mut g)?;
        for ex in batch {
            let detail = model.forward(
                &mut g,
                &binding,
                &ex.tokens,
                &ex.mask,
                &Default::default(),
                None,
            )?;
            out.push(g.scalar_value(detail.prob) >= 0.5);
        }
    }
    Ok(out)
}

/// Run the model over an encoded split and report every metric.
pub fn evaluate_model(
    model: &Model,
    examples: &[Example],
    task: Task,
    batch_size: usize,
) -> Result<EvalReport, MetricsError> {
    if examples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let preds = predictions(model, examples, batch_size)?;
    let gold: Vec<bool> = examples.iter().map(|e| e.label).collect();
    let counts = confusion(&preds, &gold)?;
    metrics(counts, task)
}
