//! Whitespace-word vocabulary with greedy longest-prefix subword fallback.
//!
//! Ids 0..=3 are reserved for `[PAD]`, `[UNK]`, `[CLS]`, `[SEP]` in that
//! order. The vocabulary is built from training sentences only; unseen words
//! fall back to the longest known prefixes, and characters nothing matches
//! become single `[UNK]` ids.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusRecord;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;

pub const RESERVED: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenizerError {
    /// Vocabulary budget too small to hold the reserved pieces plus one word.
    TargetTooSmall { target_size: usize },
    /// `max_len` cannot fit the two sentinel tokens.
    MaxLenTooSmall { max_len: usize },
    /// Piece list rejected at construction.
    BadPieces { reason: String },
}

impl core::fmt::Display for TokenizerError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TokenizerError::TargetTooSmall { target_size } => write!(
                f,
                "vocabulary size {target_size} cannot hold the 4 reserved pieces plus a word"
            ),
            TokenizerError::MaxLenTooSmall { max_len } => write!(
                f,
                "max_len {max_len} cannot fit the leading and trailing sentinel tokens"
            ),
            TokenizerError::BadPieces { reason } => write!(f, "bad piece list: {reason}"),
        }
    }
}

impl core::error::Error for TokenizerError {}

/// Ordered subword pieces with a reverse index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pieces: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Wrap an explicit piece list. The first four entries must be the
    /// reserved sentinels and every piece must be unique.
    pub fn from_pieces(pieces: Vec<String>) -> Result<Vocabulary, TokenizerError> {
        if pieces.len() < RESERVED.len() {
            return Err(TokenizerError::BadPieces {
                reason: alloc::format!("{} pieces cannot cover the reserved ids", pieces.len()),
            });
        }
        for (i, want) in RESERVED.iter().enumerate() {
            if pieces[i] != *want {
                return Err(TokenizerError::BadPieces {
                    reason: alloc::format!("piece {i} is `{}`, expected `{want}`", pieces[i]),
                });
            }
        }
        let mut index = BTreeMap::new();
        for (i, p) in pieces.iter().enumerate() {
            if index.insert(p.clone(), i).is_some() {
                return Err(TokenizerError::BadPieces {
                    reason: alloc::format!("duplicate piece `{p}`"),
                });
            }
        }
        Ok(Vocabulary { pieces, index })
    }

    /// Rebuild the reverse index after deserialization.
    pub fn reindex(self) -> Result<Vocabulary, TokenizerError> {
        Vocabulary::from_pieces(self.pieces)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn id_of(&self, piece: &str) -> Option<usize> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: usize) -> Option<&str> {
        self.pieces.get(id).map(String::as_str)
    }
}

/// Build a vocabulary from the sentences of `records`: the reserved pieces
/// followed by the most frequent whitespace-separated words, ties broken
/// lexicographically, truncated to `target_size` entries in total.
pub fn build_vocab(
    records: &[CorpusRecord],
    target_size: usize,
) -> Result<Vocabulary, TokenizerError> {
    if target_size <= RESERVED.len() {
        return Err(TokenizerError::TargetTooSmall { target_size });
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        for word in r.sentence.split_whitespace() {
            *counts.entry(word).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let reserved_set: BTreeSet<&str> = RESERVED.iter().copied().collect();
    let mut pieces: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    for (word, _) in ranked {
        if pieces.len() >= target_size {
            break;
        }
        if reserved_set.contains(word) {
            continue;
        }
        pieces.push(word.to_string());
    }
    Vocabulary::from_pieces(pieces)
}

/// Longest vocabulary piece that prefixes `rest`, skipping reserved ids.
fn longest_prefix(vocab: &Vocabulary, rest: &str) -> Option<(usize, usize)> {
    let mut boundaries: Vec<usize> = rest.char_indices().map(|(i, _)| i).collect();
    boundaries.push(rest.len());
    for &end in boundaries.iter().skip(1).rev() {
        if let Some(id) = vocab.id_of(&rest[..end]) {
            if id >= RESERVED.len() {
                return Some((id, end));
            }
        }
    }
    None
}

fn word_to_ids(vocab: &Vocabulary, word: &str, out: &mut Vec<usize>) {
    let mut rest = word;
    while !rest.is_empty() {
        match longest_prefix(vocab, rest) {
            Some((id, end)) => {
                out.push(id);
                rest = &rest[end..];
            }
            None => {
                out.push(UNK_ID);
                let mut chars = rest.char_indices();
                chars.next();
                let next = chars.next().map(|(i, _)| i).unwrap_or(rest.len());
                rest = &rest[next..];
            }
        }
    }
}

/// Encode one sentence as exactly `max_len` ids: `[CLS]`, the word pieces
/// truncated to fit, `[SEP]`, then padding. The mask is true for every
/// non-pad position.
pub fn tokenize(
    sentence: &str,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<(Vec<usize>, Vec<bool>), TokenizerError> {
    if max_len < 2 {
        return Err(TokenizerError::MaxLenTooSmall { max_len });
    }
    let mut body = Vec::new();
    for word in sentence.split_whitespace() {
        word_to_ids(vocab, word, &mut body);
    }
    body.truncate(max_len - 2);
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS_ID);
    ids.extend_from_slice(&body);
    ids.push(SEP_ID);
    let real = ids.len();
    ids.resize(max_len, PAD_ID);
    let mask: Vec<bool> = (0..max_len).map(|i| i < real).collect();
    Ok((ids, mask))
}
