//! Run configuration: a JSON file supplies values, command-line flags
//! override the file, and the chosen profile fills everything left.
//!
//! The resolved configuration is fully concrete and is echoed as JSON next
//! to every output, so any run can be repeated exactly from its echo.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use headprune::corpus::Task;
use headprune::model::ModelConfig;
use headprune::prune::{ScoreReduction, SourceSplit};
use headprune::train::TrainConfig;

use crate::error::CliError;

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

/// Named default sets: `desk` is sized to train from scratch in seconds;
/// `paper` is the full-size configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

// ---------------------------------------------------------------------------
// Config file
// ---------------------------------------------------------------------------

/// Optional overrides loaded from a JSON file. Unknown keys are rejected so
/// a typo cannot silently fall back to a default.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    pub task: Option<Task>,
    pub vocab_size: Option<usize>,
    pub d_model: Option<usize>,
    pub n_layers: Option<usize>,
    pub n_heads: Option<usize>,
    pub d_ff: Option<usize>,
    pub max_len: Option<usize>,
    pub lstm_hidden: Option<usize>,
    pub lstm_layers: Option<usize>,
    pub dropout: Option<f64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub weight_decay: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub adam_epsilon: Option<f64>,
    pub threshold: Option<f64>,
    pub epsilon: Option<f64>,
    pub score_split: Option<SourceSplit>,
    pub reduction: Option<ScoreReduction>,
    pub n: Option<usize>,
    pub marker_rate: Option<f64>,
}

// ---------------------------------------------------------------------------
// Flag overrides
// ---------------------------------------------------------------------------

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: headprune::CorpusError| e.to_string())
}

fn parse_split(s: &str) -> Result<SourceSplit, String> {
    s.parse()
        .map_err(|e: headprune::prune::PruneError| e.to_string())
}

fn parse_reduction(s: &str) -> Result<ScoreReduction, String> {
    s.parse()
        .map_err(|e: headprune::prune::PruneError| e.to_string())
}

/// Flags shared by every subcommand. Each one overrides the config file,
/// which overrides the profile defaults listed here as [desk / paper].
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file; flags given alongside it win.
    #[arg(long, env = "HEADPRUNE_CONFIG", value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Default set to start from [default: desk].
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,

    /// Seed for every random choice in the run [default: 7].
    #[arg(long)]
    pub seed: Option<u64>,

    /// Label column to classify: idiom or metaphor [default: idiom].
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,

    /// Vocabulary size cap when building from data [4096 / 30000].
    #[arg(long)]
    pub vocab_size: Option<usize>,

    /// Encoder width [64 / 768].
    #[arg(long)]
    pub d_model: Option<usize>,

    /// Encoder depth [4 / 12].
    #[arg(long)]
    pub n_layers: Option<usize>,

    /// Attention heads per layer [4 / 12].
    #[arg(long)]
    pub n_heads: Option<usize>,

    /// Feed-forward width [128 / 3072].
    #[arg(long)]
    pub d_ff: Option<usize>,

    /// Token positions per sequence [24 / 128].
    #[arg(long)]
    pub max_len: Option<usize>,

    /// LSTM units per direction [32 / 128].
    #[arg(long)]
    pub lstm_hidden: Option<usize>,

    /// Stacked LSTM layers [2 / 2].
    #[arg(long)]
    pub lstm_layers: Option<usize>,

    /// Dropout rate during training [0.0 / 0.1].
    #[arg(long)]
    pub dropout: Option<f64>,

    /// Optimizer step size [1e-3 / 2e-5].
    #[arg(long)]
    pub learning_rate: Option<f64>,

    /// Examples per optimizer step [16 / 16].
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Epoch budget [20 / 20].
    #[arg(long)]
    pub max_epochs: Option<usize>,

    /// Epochs without validation improvement before stopping [10 / 10].
    #[arg(long)]
    pub patience: Option<usize>,

    /// Decoupled weight decay [0.01 / 0.01].
    #[arg(long)]
    pub weight_decay: Option<f64>,

    /// First moment decay [0.9 / 0.9].
    #[arg(long)]
    pub beta1: Option<f64>,

    /// Second moment decay [0.999 / 0.999].
    #[arg(long)]
    pub beta2: Option<f64>,

    /// Optimizer denominator guard [1e-8 / 1e-8].
    #[arg(long)]
    pub adam_epsilon: Option<f64>,

    /// Importance at or below threshold + epsilon prunes the head [0.0 / 0.0].
    #[arg(long)]
    pub threshold: Option<f64>,

    /// Slack added to the threshold comparison [0.0 / 0.0].
    #[arg(long)]
    pub epsilon: Option<f64>,

    /// Split scored by score-heads: train, validation, or test
    /// [validation / validation].
    #[arg(long, value_parser = parse_split)]
    pub score_split: Option<SourceSplit>,

    /// How per-example scores combine: mean or sum [mean / mean].
    #[arg(long, value_parser = parse_reduction)]
    pub reduction: Option<ScoreReduction>,

    /// Sentences to generate, half positive [200 / 200].
    #[arg(long)]
    pub n: Option<usize>,

    /// Marker insertion chance per word gap in positives [0.25 / 0.25].
    #[arg(long)]
    pub marker_rate: Option<f64>,
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

/// Every knob of a run, fully concrete. Serialized verbatim as the config
/// echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub profile: Profile,
    pub seed: u64,
    pub task: Task,
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub threshold: f64,
    pub epsilon: f64,
    pub score_split: SourceSplit,
    pub reduction: ScoreReduction,
    pub n: usize,
    pub marker_rate: f64,
}

impl Resolved {
    fn profile_defaults(profile: Profile) -> Resolved {
        let seed = 7;
        let (model, train, vocab_cap) = match profile {
            Profile::Desk => (ModelConfig::desk(0), TrainConfig::desk(seed), 4096),
            Profile::Paper => (ModelConfig::full(0), TrainConfig::full(seed), 30000),
        };
        Resolved {
            profile,
            seed,
            task: Task::Idiom,
            vocab_size: vocab_cap,
            d_model: model.d_model,
            n_layers: model.n_layers,
            n_heads: model.n_heads,
            d_ff: model.d_ff,
            max_len: model.max_len,
            lstm_hidden: model.lstm_hidden,
            lstm_layers: model.lstm_layers,
            dropout: model.dropout,
            learning_rate: train.learning_rate,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            patience: train.patience,
            weight_decay: train.weight_decay,
            beta1: train.beta1,
            beta2: train.beta2,
            adam_epsilon: train.epsilon,
            threshold: 0.0,
            epsilon: 0.0,
            score_split: SourceSplit::Validation,
            reduction: ScoreReduction::Mean,
            n: 200,
            marker_rate: 0.25,
        }
    }

    /// The encoder configuration for a concrete vocabulary.
    pub fn model_config(&self, vocab_len: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab_len,
            d_model: self.d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            max_len: self.max_len,
            lstm_hidden: self.lstm_hidden,
            lstm_layers: self.lstm_layers,
            dropout: self.dropout,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            weight_decay: self.weight_decay,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
            seed: self.seed,
        }
    }

    /// The JSON written next to every output.
    pub fn echo(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }
}

macro_rules! take {
    ($base:expr, $file:expr, $flags:expr, $($field:ident),+ $(,)?) => {
        $(
            if let Some(v) = $file.$field {
                $base.$field = v;
            }
            if let Some(v) = $flags.$field {
                $base.$field = v;
            }
        )+
    };
}

/// Load the config file (if any) and fold profile defaults, file values,
/// and flags into one concrete configuration.
pub fn resolve(flags: &Overrides) -> Result<Resolved, CliError> {
    let file: FileConfig = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let profile = flags.profile.or(file.profile).unwrap_or(Profile::Desk);
    let mut cfg = Resolved::profile_defaults(profile);
    take!(
        cfg, file, flags, seed, task, vocab_size, d_model, n_layers, n_heads, d_ff, max_len,
        lstm_hidden, lstm_layers, dropout, learning_rate, batch_size, max_epochs, patience,
        weight_decay, beta1, beta2, adam_epsilon, threshold, epsilon, score_split, reduction,
        n, marker_rate,
    );
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_defaults_differ_where_expected() {
        let desk = Resolved::profile_defaults(Profile::Desk);
        let paper = Resolved::profile_defaults(Profile::Paper);
        assert_eq!(desk.d_model, 64);
        assert_eq!(paper.d_model, 768);
        assert_eq!(desk.learning_rate, 1e-3);
        assert_eq!(paper.learning_rate, 2e-5);
        assert_eq!(desk.batch_size, paper.batch_size);
        assert_eq!(desk.threshold, 0.0);
        assert_eq!(desk.score_split, SourceSplit::Validation);
    }

    #[test]
    fn flags_override_file_overrides_profile() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"seed": 99, "d_model": 32, "task": "metaphor"}"#).unwrap();
        let flags = Overrides {
            config: Some(path),
            seed: Some(5),
            ..Default::default()
        };
        let cfg = resolve(&flags).unwrap();
        assert_eq!(cfg.seed, 5, "flag beats file");
        assert_eq!(cfg.d_model, 32, "file beats profile");
        assert_eq!(cfg.task, Task::Metaphor);
        assert_eq!(cfg.n_layers, 4, "profile fills the rest");
    }

    #[test]
    fn unknown_config_keys_are_named_in_the_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"learning_rte": 0.1}"#).unwrap();
        let flags = Overrides {
            config: Some(path),
            ..Default::default()
        };
        let err = resolve(&flags).unwrap_err();
        assert!(err.to_string().contains("learning_rte"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn echo_round_trips() {
        let cfg = Resolved::profile_defaults(Profile::Desk);
        let parsed: Resolved = serde_json::from_str(&cfg.echo()).unwrap();
        assert_eq!(parsed, cfg);
    }
}
