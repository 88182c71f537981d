//! Mini-batch training with early stopping on validation loss.
//!
//! Each batch builds one fresh graph: the parameters are bound once, every
//! example's loss is built against that binding, and the batch mean is the
//! single backward root. The loop snapshots parameters whenever the
//! validation loss improves and restores the best snapshot at the end, so the
//! trained model is always the minimum-validation-loss model.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, CorpusRecord, Task};
use crate::graph::Graph;
use crate::model::{bce_loss, ForwardOptions, HeadMask, Model, ModelConfig, ModelError};
use crate::optim::{self, AdamState, AdamW};
use crate::params::ParamSet;
use crate::tokenizer::{self, TokenizerError, Vocabulary};

/// A validation loss must beat the best by more than this to count as an
/// improvement.
pub const IMPROVEMENT_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    BadConfig {
        field: &'static str,
        detail: String,
    },
    EmptySplit {
        which: &'static str,
    },
    /// A gradient entry was NaN or infinite.
    NonFiniteGrad {
        name: String,
    },
    /// A train or validation loss was NaN or infinite.
    NonFiniteLoss {
        epoch: usize,
    },
    /// Optimizer state misaligned with the parameter set.
    StateShape {
        params: usize,
        grads: usize,
        moments: usize,
    },
    GradShape {
        name: String,
        expected: usize,
        got: usize,
    },
    Corpus(CorpusError),
    Tokenizer(TokenizerError),
    Model(ModelError),
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::BadConfig { field, detail } => {
                write!(f, "bad training config field `{field}`: {detail}")
            }
            TrainError::EmptySplit { which } => {
                write!(f, "the {which} split is empty")
            }
            TrainError::NonFiniteGrad { name } => {
                write!(f, "non-finite gradient for parameter `{name}`")
            }
            TrainError::NonFiniteLoss { epoch } => {
                write!(f, "non-finite loss at epoch {epoch}; training diverged")
            }
            TrainError::StateShape {
                params,
                grads,
                moments,
            } => write!(
                f,
                "optimizer saw {params} parameters, {grads} gradients, {moments} moment buffers"
            ),
            TrainError::GradShape {
                name,
                expected,
                got,
            } => write!(
                f,
                "gradient for `{name}` has {got} entries, expected {expected}"
            ),
            TrainError::Corpus(e) => write!(f, "corpus error: {e}"),
            TrainError::Tokenizer(e) => write!(f, "tokenizer error: {e}"),
            TrainError::Model(e) => write!(f, "model error: {e}"),
        }
    }
}

impl core::error::Error for TrainError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            TrainError::Corpus(e) => Some(e),
            TrainError::Tokenizer(e) => Some(e),
            TrainError::Model(e) => Some(e),
            _ => None,
        }
    }
}

impl From<CorpusError> for TrainError {
    fn from(e: CorpusError) -> Self {
        TrainError::Corpus(e)
    }
}

impl From<TokenizerError> for TrainError {
    fn from(e: TokenizerError) -> Self {
        TrainError::Tokenizer(e)
    }
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults for the small randomly initialized profile; the larger rate
    /// suits training from scratch.
    pub fn desk(seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-3,
            ..TrainConfig::full(seed)
        }
    }

    /// Defaults for the full-size profile, whose small rate suits fine-tuning
    /// pretrained weights.
    pub fn full(seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: 2e-5,
            batch_size: 16,
            max_epochs: 20,
            patience: 10,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let positive: [(&'static str, f64); 2] = [
            ("learning_rate", self.learning_rate),
            ("epsilon", self.epsilon),
        ];
        for (field, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(TrainError::BadConfig {
                    field,
                    detail: alloc::format!("{value} must be a positive finite number"),
                });
            }
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(TrainError::BadConfig {
                field: "weight_decay",
                detail: alloc::format!("{} must be finite and non-negative", self.weight_decay),
            });
        }
        for (field, value) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(value > 0.0 && value < 1.0) {
                return Err(TrainError::BadConfig {
                    field,
                    detail: alloc::format!("{value} must lie strictly between 0 and 1"),
                });
            }
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig {
                field: "batch_size",
                detail: String::from("must be at least 1"),
            });
        }
        if self.max_epochs == 0 {
            return Err(TrainError::BadConfig {
                field: "max_epochs",
                detail: String::from("must be at least 1"),
            });
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return Err(TrainError::BadConfig {
                field: "patience",
                detail: alloc::format!(
                    "{} must lie in 1..=max_epochs ({})",
                    self.patience,
                    self.max_epochs
                ),
            });
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

// ---------------------------------------------------------------------------
// Examples
// ---------------------------------------------------------------------------

/// One encoded training example. The id survives encoding so that errors
/// raised deep in a batch can still name the offending input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub id: String,
    pub tokens: Vec<usize>,
    pub mask: Vec<bool>,
    pub label: bool,
}

/// Tokenize records and bind the task label.
pub fn encode(
    records: &[CorpusRecord],
    vocab: &Vocabulary,
    max_len: usize,
    task: Task,
) -> Result<Vec<Example>, TrainError> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let label = r.label(task)?;
        let (tokens, mask) = tokenizer::tokenize(&r.sentence, vocab, max_len)?;
        out.push(Example {
            id: r.id.clone(),
            tokens,
            mask,
            label,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Early stopping
// ---------------------------------------------------------------------------

/// Tracks the best validation loss and how long it has been stale.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

/// What one observation decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> EarlyStopper {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Observation {
        let improved = self.best - loss > IMPROVEMENT_TOL;
        if improved {
            self.best = loss;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Observation {
            improved,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Per-epoch record for the history CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochStats>,
    pub stopped_early: bool,
}

fn snapshot(params: &ParamSet) -> Vec<Vec<f64>> {
    params.iter().map(|p| p.data.clone()).collect()
}

fn restore(params: &mut ParamSet, snap: &[Vec<f64>]) {
    for (i, data) in snap.iter().enumerate() {
        params.at_mut(i).data.clone_from(data);
    }
}

/// Mean validation loss and accuracy, built in inference mode (no dropout).
pub fn eval_loss_accuracy(
    model: &Model,
    examples: &[Example],
    batch_size: usize,
) -> Result<(f64, f64), TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptySplit {
            which: "evaluation",
        });
    }
    let chunk = batch_size.max(1);
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for batch in examples.chunks(chunk) {
        let mut g = Graph::new();
        let binding = model.bind(&mut g)?;
        for ex in batch {
            let detail = model.forward(
                &mut g,
                &binding,
                &ex.tokens,
                &ex.mask,
                &ForwardOptions::default(),
                None,
            )?;
            let loss = bce_loss(&mut g, detail.prob, ex.label)?;
            loss_sum += g.scalar_value(loss);
            let prob = g.scalar_value(detail.prob);
            if (prob >= 0.5) == ex.label {
                correct += 1;
            }
        }
    }
    let n = examples.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

/// Train `model` in place. On return the model carries the parameters of the
/// epoch with the lowest validation loss; the outcome reports that epoch, the
/// loss, and the full per-epoch history.
pub fn train(
    model: &mut Model,
    train_set: &[Example],
    val_set: &[Example],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit { which: "train" });
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit {
            which: "validation",
        });
    }
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(2);

    let opt_cfg = config.optimizer();
    let mut opt_state = AdamState::new(&model.params);
    let mut stopper = EarlyStopper::new(config.patience);
    let mut best_params = snapshot(&model.params);
    let mut history = Vec::new();
    let mut stopped_early = false;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut g = Graph::new();
            let binding = model.bind(&mut g)?;
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let ex = &train_set[i];
                let detail = model.forward(
                    &mut g,
                    &binding,
                    &ex.tokens,
                    &ex.mask,
                    &ForwardOptions::default(),
                    Some(&mut dropout_rng),
                )?;
                losses.push(bce_loss(&mut g, detail.prob, ex.label)?);
            }
            let stacked = g.concat_cols(&losses).map_err(ModelError::Graph)?;
            let batch_loss = g.mean(stacked);
            let value = g.scalar_value(batch_loss);
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch });
            }
            loss_sum += value * batch.len() as f64;
            g.backward(batch_loss).map_err(ModelError::Graph)?;
            let grads = model.params.read_grads(&g, &binding.all);
            optim::step(&mut model.params, &grads, &mut opt_state, &opt_cfg)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_accuracy) = eval_loss_accuracy(model, val_set, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
        let obs = stopper.observe(epoch, val_loss);
        if obs.improved {
            best_params = snapshot(&model.params);
        }
        if obs.stop {
            stopped_early = true;
            break;
        }
    }
    restore(&mut model.params, &best_params);
    Ok(TrainOutcome {
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best(),
        history,
        stopped_early,
    })
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

/// Everything needed to rebuild a trained model and evaluate new text:
/// configuration, parameters, head mask, vocabulary, task binding, and the
/// provenance of the run that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub params: ParamSet,
    pub head_mask: HeadMask,
    pub train_config: TrainConfig,
    pub vocab: Vocabulary,
    pub task: Task,
    /// Epoch whose parameters these are (minimum validation loss).
    pub epoch: usize,
    pub val_loss: f64,
    /// Hex digest of the corpus the run trained on.
    pub corpus_fingerprint: String,
}

impl Checkpoint {
    pub fn from_model(
        model: &Model,
        train_config: &TrainConfig,
        vocab: &Vocabulary,
        task: Task,
        epoch: usize,
        val_loss: f64,
        corpus_fingerprint: String,
    ) -> Checkpoint {
        Checkpoint {
            model_config: model.config.clone(),
            params: model.params.clone(),
            head_mask: model.head_mask.clone(),
            train_config: train_config.clone(),
            vocab: vocab.clone(),
            task,
            epoch,
            val_loss,
            corpus_fingerprint,
        }
    }

    /// Rebuild the model, validating the parameter layout against the
    /// configuration.
    pub fn to_model(&self) -> Result<Model, ModelError> {
        Model::from_parts(
            self.model_config.clone(),
            self.params.clone(),
            self.head_mask.clone(),
        )
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
