//! One error type for the whole binary, sorted into the two failure exit
//! codes: 1 for anything the user can fix (flags, config, input files, data
//! contents), 2 for states that indicate a bug or a broken installation.

use std::fmt;

use headprune::metrics::MetricsError;
use headprune::model::ModelError;
use headprune::prune::PruneError;
use headprune::report::ReportError;
use headprune::{CorpusError, GraphError, ParamError, TokenizerError, TrainError};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or malformed inputs, impossible requests.
    Usage(String),
    /// The computation itself reached a state it never should.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Internal(_) => 2,
        }
    }

    pub fn usage(msg: impl Into<String>) -> CliError {
        CliError::Usage(msg.into())
    }

    /// Attach the file path to an IO failure.
    pub fn io(path: &std::path::Path, err: std::io::Error) -> CliError {
        CliError::Usage(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<TokenizerError> for CliError {
    fn from(e: TokenizerError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<ParamError> for CliError {
    fn from(e: ParamError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        // By the time a model runs, its inputs went through the encoders and
        // loaders; a model-level failure is a broken invariant, not bad input.
        CliError::Internal(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(inner) => CliError::Internal(inner.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Model(inner) => CliError::Internal(inner.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<PruneError> for CliError {
    fn from(e: PruneError) -> Self {
        match e {
            PruneError::Model(inner) => CliError::Internal(inner.to_string()),
            PruneError::Metrics(inner) => CliError::from(inner),
            PruneError::Train(inner) => CliError::from(inner),
            other => CliError::Usage(other.to_string()),
        }
    }
}
