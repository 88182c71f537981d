//! Single-file checkpoint format: one JSON manifest line, a newline, then
//! every parameter tensor as little-endian f64 bytes in manifest order.
//!
//! The manifest carries the configs, mask, vocabulary, and per-tensor shapes
//! with element offsets, so a reader can validate the payload before
//! touching it. Writing is deterministic: the same checkpoint always
//! produces the same bytes.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use headprune::corpus::Task;
use headprune::model::{HeadMask, ModelConfig};
use headprune::train::{Checkpoint, TrainConfig};
use headprune::{ParamSet, Vocabulary};

pub const FORMAT_NAME: &str = "headprune-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum CheckpointError {
    Io {
        path: String,
        error: std::io::Error,
    },
    /// No newline-terminated first line, or the line is not valid manifest
    /// JSON.
    Manifest {
        detail: String,
    },
    /// The file is some other format.
    Format {
        found: String,
    },
    /// The format is right but the version is one this build cannot read.
    Version {
        found: u32,
    },
    /// A tensor's shape does not multiply out to its element count.
    Shape {
        name: String,
    },
    /// A tensor's offset disagrees with the running layout.
    Offset {
        name: String,
    },
    /// Payload shorter than the manifest promises.
    Truncated {
        expected_bytes: usize,
        found_bytes: usize,
    },
    /// Payload longer than the manifest promises.
    Trailing {
        extra_bytes: usize,
    },
    BadParams {
        detail: String,
    },
    BadVocab {
        detail: String,
    },
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io { path, error } => write!(f, "{path}: {error}"),
            CheckpointError::Manifest { detail } => {
                write!(f, "unreadable checkpoint manifest: {detail}")
            }
            CheckpointError::Format { found } => {
                write!(f, "not a {FORMAT_NAME} file (format '{found}')")
            }
            CheckpointError::Version { found } => write!(
                f,
                "checkpoint version {found} is not supported (this build reads {FORMAT_VERSION})"
            ),
            CheckpointError::Shape { name } => {
                write!(f, "tensor {name} has a shape that contradicts its length")
            }
            CheckpointError::Offset { name } => {
                write!(f, "tensor {name} is not where the layout places it")
            }
            CheckpointError::Truncated {
                expected_bytes,
                found_bytes,
            } => write!(
                f,
                "checkpoint payload is truncated: {found_bytes} of {expected_bytes} bytes"
            ),
            CheckpointError::Trailing { extra_bytes } => {
                write!(f, "checkpoint has {extra_bytes} bytes past the declared payload")
            }
            CheckpointError::BadParams { detail } => {
                write!(f, "checkpoint parameters are inconsistent: {detail}")
            }
            CheckpointError::BadVocab { detail } => {
                write!(f, "checkpoint vocabulary is inconsistent: {detail}")
            }
        }
    }
}

impl std::error::Error for CheckpointError {}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Element offset from the start of the payload.
    offset: usize,
    /// Element count.
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    model_config: ModelConfig,
    train_config: TrainConfig,
    head_mask: HeadMask,
    vocab: Vec<String>,
    task: Task,
    epoch: usize,
    val_loss: f64,
    corpus_fingerprint: String,
    tensors: Vec<TensorEntry>,
}

// ---------------------------------------------------------------------------
// Write
// ---------------------------------------------------------------------------

/// Serialize the checkpoint to its on-disk bytes.
pub fn checkpoint_to_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut offset = 0usize;
    for p in ckpt.params.iter() {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            offset,
            len: p.data.len(),
        });
        offset += p.data.len();
    }
    let manifest = Manifest {
        format: String::from(FORMAT_NAME),
        version: FORMAT_VERSION,
        model_config: ckpt.model_config.clone(),
        train_config: ckpt.train_config.clone(),
        head_mask: ckpt.head_mask.clone(),
        vocab: ckpt.vocab.pieces().to_vec(),
        task: ckpt.task,
        epoch: ckpt.epoch,
        val_loss: ckpt.val_loss,
        corpus_fingerprint: ckpt.corpus_fingerprint.clone(),
        tensors,
    };
    let line = serde_json::to_string(&manifest).expect("manifest serializes");
    let mut bytes = Vec::with_capacity(line.len() + 1 + offset * 8);
    bytes.extend_from_slice(line.as_bytes());
    bytes.push(b'\n');
    for p in ckpt.params.iter() {
        for v in &p.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    std::fs::write(path, checkpoint_to_bytes(ckpt)).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        error: e,
    })
}

// ---------------------------------------------------------------------------
// Read
// ---------------------------------------------------------------------------

/// Parse checkpoint bytes, validating the layout before decoding.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(CheckpointError::Manifest {
            detail: String::from("no manifest line"),
        })?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[..newline]).map_err(|e| CheckpointError::Manifest {
            detail: e.to_string(),
        })?;
    if manifest.format != FORMAT_NAME {
        return Err(CheckpointError::Format {
            found: manifest.format,
        });
    }
    if manifest.version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: manifest.version,
        });
    }
    let mut running = 0usize;
    for t in &manifest.tensors {
        let product: usize = t.shape.iter().product();
        if product != t.len || t.shape.is_empty() {
            return Err(CheckpointError::Shape { name: t.name.clone() });
        }
        if t.offset != running {
            return Err(CheckpointError::Offset { name: t.name.clone() });
        }
        running += t.len;
    }
    let payload = &bytes[newline + 1..];
    let expected_bytes = running * 8;
    if payload.len() < expected_bytes {
        return Err(CheckpointError::Truncated {
            expected_bytes,
            found_bytes: payload.len(),
        });
    }
    if payload.len() > expected_bytes {
        return Err(CheckpointError::Trailing {
            extra_bytes: payload.len() - expected_bytes,
        });
    }
    let mut params = ParamSet::default();
    for t in &manifest.tensors {
        let start = t.offset * 8;
        let mut data = Vec::with_capacity(t.len);
        for i in 0..t.len {
            let at = start + i * 8;
            let mut raw = [0u8; 8];
            raw.copy_from_slice(&payload[at..at + 8]);
            data.push(f64::from_le_bytes(raw));
        }
        params
            .add(&t.name, t.shape.clone(), data)
            .map_err(|e| CheckpointError::BadParams {
                detail: e.to_string(),
            })?;
    }
    let vocab = Vocabulary::from_pieces(manifest.vocab).map_err(|e| CheckpointError::BadVocab {
        detail: e.to_string(),
    })?;
    Ok(Checkpoint {
        model_config: manifest.model_config,
        params,
        head_mask: manifest.head_mask,
        train_config: manifest.train_config,
        vocab,
        task: manifest.task,
        epoch: manifest.epoch,
        val_loss: manifest.val_loss,
        corpus_fingerprint: manifest.corpus_fingerprint,
    })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        error: e,
    })?;
    checkpoint_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use headprune::model::{Model, ModelConfig};

    fn demo_checkpoint() -> Checkpoint {
        let config = ModelConfig {
            vocab_size: 6,
            d_model: 4,
            n_layers: 1,
            n_heads: 2,
            d_ff: 4,
            max_len: 5,
            lstm_hidden: 2,
            lstm_layers: 1,
            dropout: 0.0,
        };
        let model = Model::init(config, 3).unwrap();
        let vocab = Vocabulary::from_pieces(
            ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "ivy", "oak"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .unwrap();
        Checkpoint::from_model(
            &model,
            &TrainConfig::desk(3),
            &vocab,
            Task::Idiom,
            4,
            0.125,
            String::from("abcd"),
        )
    }

    #[test]
    fn round_trip_preserves_every_bit() {
        let ckpt = demo_checkpoint();
        let bytes = checkpoint_to_bytes(&ckpt);
        let back = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(back.model_config, ckpt.model_config);
        assert_eq!(back.train_config, ckpt.train_config);
        assert_eq!(back.head_mask, ckpt.head_mask);
        assert_eq!(back.vocab.pieces(), ckpt.vocab.pieces());
        assert_eq!(back.task, ckpt.task);
        assert_eq!(back.epoch, 4);
        assert_eq!(back.val_loss.to_bits(), ckpt.val_loss.to_bits());
        assert_eq!(back.corpus_fingerprint, "abcd");
        for (a, b) in back.params.iter().zip(ckpt.params.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        // Writing is deterministic.
        assert_eq!(checkpoint_to_bytes(&back), bytes);
    }

    #[test]
    fn corrupting_the_last_byte_reads_as_truncation() {
        let bytes = checkpoint_to_bytes(&demo_checkpoint());
        let short = &bytes[..bytes.len() - 1];
        assert!(matches!(
            checkpoint_from_bytes(short).unwrap_err(),
            CheckpointError::Truncated { .. }
        ));
    }

    #[test]
    fn extra_bytes_are_rejected() {
        let mut bytes = checkpoint_to_bytes(&demo_checkpoint());
        bytes.push(0);
        assert!(matches!(
            checkpoint_from_bytes(&bytes).unwrap_err(),
            CheckpointError::Trailing { extra_bytes: 1 }
        ));
    }

    #[test]
    fn wrong_format_and_version_are_distinct_errors() {
        let ckpt = demo_checkpoint();
        let bytes = checkpoint_to_bytes(&ckpt);
        let line_end = bytes.iter().position(|&b| b == b'\n').unwrap();
        let line = std::str::from_utf8(&bytes[..line_end]).unwrap();

        let other = line.replace(FORMAT_NAME, "someone-elses-format");
        let mut forged = other.into_bytes();
        forged.push(b'\n');
        forged.extend_from_slice(&bytes[line_end + 1..]);
        assert!(matches!(
            checkpoint_from_bytes(&forged).unwrap_err(),
            CheckpointError::Format { .. }
        ));

        let newer = line.replace("\"version\":1", "\"version\":2");
        let mut forged = newer.into_bytes();
        forged.push(b'\n');
        forged.extend_from_slice(&bytes[line_end + 1..]);
        assert!(matches!(
            checkpoint_from_bytes(&forged).unwrap_err(),
            CheckpointError::Version { found: 2 }
        ));

        assert!(matches!(
            checkpoint_from_bytes(b"not json\nxx").unwrap_err(),
            CheckpointError::Manifest { .. }
        ));
        assert!(matches!(
            checkpoint_from_bytes(b"no newline at all").unwrap_err(),
            CheckpointError::Manifest { .. }
        ));
    }

    #[test]
    fn shape_and_offset_lies_are_caught() {
        let bytes = checkpoint_to_bytes(&demo_checkpoint());
        let line_end = bytes.iter().position(|&b| b == b'\n').unwrap();
        let line = std::str::from_utf8(&bytes[..line_end]).unwrap();

        // First tensor is the token embedding [6, 4] = 24 elements.
        let bad_shape = line.replacen("\"shape\":[6,4]", "\"shape\":[6,5]", 1);
        assert_ne!(bad_shape, line);
        let mut forged = bad_shape.into_bytes();
        forged.push(b'\n');
        forged.extend_from_slice(&bytes[line_end + 1..]);
        assert!(matches!(
            checkpoint_from_bytes(&forged).unwrap_err(),
            CheckpointError::Shape { .. }
        ));

        let bad_offset = line.replacen("\"offset\":24", "\"offset\":25", 1);
        assert_ne!(bad_offset, line);
        let mut forged = bad_offset.into_bytes();
        forged.push(b'\n');
        forged.extend_from_slice(&bytes[line_end + 1..]);
        assert!(matches!(
            checkpoint_from_bytes(&forged).unwrap_err(),
            CheckpointError::Offset { .. }
        ));
    }

    #[test]
    fn loaded_checkpoints_predict_identically() {
        let ckpt = demo_checkpoint();
        let back = checkpoint_from_bytes(&checkpoint_to_bytes(&ckpt)).unwrap();
        let a = ckpt.to_model().unwrap();
        let b = back.to_model().unwrap();
        let tokens = [2usize, 4, 5, 3, 0];
        let mask = [true, true, true, true, false];
        let pa = a.predict(&tokens, &mask).unwrap();
        let pb = b.predict(&tokens, &mask).unwrap();
        assert_eq!(pa.logit.to_bits(), pb.logit.to_bits());
    }
}
