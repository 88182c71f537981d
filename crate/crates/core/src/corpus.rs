//! Corpus records, TSV parsing and rendering, balanced sampling, and the
//! synthetic marker corpus used for desk-scale runs.
//!
//! The on-disk shape is UTF-8 tab-separated values with the header
//! `id expression sentence idiom metaphor split`; the `metaphor` column may
//! be absent entirely. Label and split values are trimmed and matched
//! case-insensitively, then stored normalized.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Which train/test bucket a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Binary label column a run trains against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Idiom,
    Metaphor,
}

impl Task {
    pub fn column(&self) -> &'static str {
        match self {
            Task::Idiom => "idiom",
            Task::Metaphor => "metaphor",
        }
    }
}

impl core::str::FromStr for Task {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, CorpusError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "idiom" => Ok(Task::Idiom),
            "metaphor" => Ok(Task::Metaphor),
            _ => Err(CorpusError::BadTask {
                value: s.to_string(),
            }),
        }
    }
}

impl core::fmt::Display for Task {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.column())
    }
}

/// One annotated sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub id: String,
    /// The figurative expression itself; empty when none applies.
    pub expression: String,
    pub sentence: String,
    pub idiom: bool,
    /// Absent when the corpus predates the metaphor annotation pass.
    pub metaphor: Option<bool>,
    pub split: Split,
}

impl CorpusRecord {
    /// Label under `task`. Records without the active column are rejected
    /// here rather than at load time.
    pub fn label(&self, task: Task) -> Result<bool, CorpusError> {
        match task {
            Task::Idiom => Ok(self.idiom),
            Task::Metaphor => self.metaphor.ok_or_else(|| CorpusError::MissingLabel {
                id: self.id.clone(),
                column: "metaphor",
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusError {
    /// Header row differs from the expected schema.
    Schema { found: String, expected: String },
    /// A data row has the wrong number of fields.
    FieldCount {
        line: usize,
        expected: usize,
        got: usize,
    },
    /// A Yes/No cell held something else.
    BadLabel {
        line: usize,
        id: String,
        column: &'static str,
        value: String,
    },
    /// A split cell held neither train nor test.
    BadSplit {
        line: usize,
        id: String,
        value: String,
    },
    /// Two rows share an id.
    DuplicateId { line: usize, id: String },
    /// A row has an empty id or sentence.
    EmptyField {
        line: usize,
        column: &'static str,
    },
    /// A task name was neither idiom nor metaphor.
    BadTask { value: String },
    /// A record lacks the column the active task trains on.
    MissingLabel { id: String, column: &'static str },
    /// A field to be written contains a tab or newline.
    UnwritableField { id: String, column: &'static str },
    /// Balanced sampling pre-condition failures.
    OddCount { n: usize },
    Insufficient {
        needed_per_class: usize,
        positives: usize,
        negatives: usize,
    },
    /// Synthetic-corpus rate outside `[0, 1]`.
    RateRange { value: f64 },
}

impl core::fmt::Display for CorpusError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CorpusError::Schema { found, expected } => {
                write!(f, "header `{found}` does not match the schema `{expected}`")
            }
            CorpusError::FieldCount {
                line,
                expected,
                got,
            } => write!(f, "line {line}: expected {expected} fields, found {got}"),
            CorpusError::BadLabel {
                line,
                id,
                column,
                value,
            } => write!(
                f,
                "line {line} (id {id}): column `{column}` holds `{value}`, expected Yes or No"
            ),
            CorpusError::BadSplit { line, id, value } => write!(
                f,
                "line {line} (id {id}): column `split` holds `{value}`, expected train or test"
            ),
            CorpusError::DuplicateId { line, id } => {
                write!(f, "line {line}: duplicate id `{id}`")
            }
            CorpusError::EmptyField { line, column } => {
                write!(f, "line {line}: column `{column}` is empty")
            }
            CorpusError::BadTask { value } => {
                write!(f, "task `{value}` is neither idiom nor metaphor")
            }
            CorpusError::MissingLabel { id, column } => {
                write!(f, "record `{id}` lacks the `{column}` column required by the task")
            }
            CorpusError::UnwritableField { id, column } => write!(
                f,
                "record `{id}`: column `{column}` contains a tab or newline"
            ),
            CorpusError::OddCount { n } => {
                write!(f, "count {n} must be even to balance two classes")
            }
            CorpusError::Insufficient {
                needed_per_class,
                positives,
                negatives,
            } => write!(
                f,
                "need {needed_per_class} records per class but found {positives} positive and {negatives} negative"
            ),
            CorpusError::RateRange { value } => {
                write!(f, "marker rate {value} must lie in [0, 1]")
            }
        }
    }
}

impl core::error::Error for CorpusError {}

// ---------------------------------------------------------------------------
// TSV parsing and rendering
// ---------------------------------------------------------------------------

const HEADER_FULL: [&str; 6] = ["id", "expression", "sentence", "idiom", "metaphor", "split"];
const HEADER_NO_METAPHOR: [&str; 5] = ["id", "expression", "sentence", "idiom", "split"];

fn parse_yes_no(
    raw: &str,
    line: usize,
    id: &str,
    column: &'static str,
) -> Result<bool, CorpusError> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "yes" => Ok(true),
        "no" => Ok(false),
        _ => Err(CorpusError::BadLabel {
            line,
            id: id.to_string(),
            column,
            value: raw.to_string(),
        }),
    }
}

/// Parse a whole TSV document. `line` numbers in errors are 1-based and
/// include the header.
pub fn parse_tsv(text: &str) -> Result<Vec<CorpusRecord>, CorpusError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let cols: Vec<String> = header
        .split('\t')
        .map(|c| c.trim().to_ascii_lowercase())
        .collect();
    let has_metaphor = if cols == HEADER_FULL {
        true
    } else if cols == HEADER_NO_METAPHOR {
        false
    } else {
        return Err(CorpusError::Schema {
            found: header.to_string(),
            expected: HEADER_FULL.join("\t"),
        });
    };
    let expected = if has_metaphor { 6 } else { 5 };
    let mut records = Vec::new();
    let mut seen = alloc::collections::BTreeSet::new();
    for (i, raw_line) in lines.enumerate() {
        let line = i + 2;
        if raw_line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw_line.split('\t').collect();
        if fields.len() != expected {
            return Err(CorpusError::FieldCount {
                line,
                expected,
                got: fields.len(),
            });
        }
        let id = fields[0].trim().to_string();
        if id.is_empty() {
            return Err(CorpusError::EmptyField { line, column: "id" });
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateId { line, id });
        }
        let sentence = fields[2].trim().to_string();
        if sentence.is_empty() {
            return Err(CorpusError::EmptyField {
                line,
                column: "sentence",
            });
        }
        let idiom = parse_yes_no(fields[3], line, &id, "idiom")?;
        let (metaphor, split_raw) = if has_metaphor {
            (Some(parse_yes_no(fields[4], line, &id, "metaphor")?), fields[5])
        } else {
            (None, fields[4])
        };
        let split = match split_raw.trim().to_ascii_lowercase().as_str() {
            "train" => Split::Train,
            "test" => Split::Test,
            other => {
                return Err(CorpusError::BadSplit {
                    line,
                    id,
                    value: other.to_string(),
                })
            }
        };
        records.push(CorpusRecord {
            id,
            expression: fields[1].trim().to_string(),
            sentence,
            idiom,
            metaphor,
            split,
        });
    }
    Ok(records)
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "Yes"
    } else {
        "No"
    }
}

/// Render records back to TSV with the full six-column header. Fails if a
/// field would break the format.
pub fn render_tsv(records: &[CorpusRecord]) -> Result<String, CorpusError> {
    let mut out = String::new();
    out.push_str(&HEADER_FULL.join("\t"));
    out.push('\n');
    for r in records {
        for (column, value) in [
            ("id", r.id.as_str()),
            ("expression", r.expression.as_str()),
            ("sentence", r.sentence.as_str()),
        ] {
            if value.contains('\t') || value.contains('\n') {
                return Err(CorpusError::UnwritableField {
                    id: r.id.clone(),
                    column,
                });
            }
        }
        out.push_str(&r.id);
        out.push('\t');
        out.push_str(&r.expression);
        out.push('\t');
        out.push_str(&r.sentence);
        out.push('\t');
        out.push_str(yes_no(r.idiom));
        out.push('\t');
        // Absent metaphor annotations round-trip through the six-column
        // shape as No; corpora that never had the column should be written
        // by hand if that distinction matters.
        out.push_str(yes_no(r.metaphor.unwrap_or(false)));
        out.push('\t');
        out.push_str(r.split.as_str());
        out.push('\n');
    }
    Ok(out)
}

/// Lowercase hex SHA-256 of the canonical TSV rendering.
pub fn fingerprint(records: &[CorpusRecord]) -> Result<String, CorpusError> {
    let text = render_tsv(records)?;
    let digest = Sha256::digest(text.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use core::fmt::Write;
        let _ = write!(hex, "{byte:02x}");
    }
    Ok(hex)
}

// ---------------------------------------------------------------------------
// Sampling and splitting
// ---------------------------------------------------------------------------

/// Records in one split, cloned in input order.
pub fn by_split(records: &[CorpusRecord], split: Split) -> Vec<CorpusRecord> {
    records.iter().filter(|r| r.split == split).cloned().collect()
}

/// Exactly `n/2` positives and `n/2` negatives under `task`, sampled without
/// replacement and shuffled, deterministically in `seed`.
pub fn balanced_subset(
    records: &[CorpusRecord],
    task: Task,
    n: usize,
    seed: u64,
) -> Result<Vec<CorpusRecord>, CorpusError> {
    if n % 2 != 0 {
        return Err(CorpusError::OddCount { n });
    }
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for r in records {
        if r.label(task)? {
            positives.push(r.clone());
        } else {
            negatives.push(r.clone());
        }
    }
    let per_class = n / 2;
    if positives.len() < per_class || negatives.len() < per_class {
        return Err(CorpusError::Insufficient {
            needed_per_class: per_class,
            positives: positives.len(),
            negatives: negatives.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);
    let mut out: Vec<CorpusRecord> = positives
        .into_iter()
        .take(per_class)
        .chain(negatives.into_iter().take(per_class))
        .collect();
    out.shuffle(&mut rng);
    Ok(out)
}

/// Deterministically carve a tenth of `records` (rounded down) off as a
/// validation set. Returns `(train, validation)`.
pub fn carve_validation(
    records: &[CorpusRecord],
    seed: u64,
) -> (Vec<CorpusRecord>, Vec<CorpusRecord>) {
    let mut shuffled: Vec<CorpusRecord> = records.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let n_val = shuffled.len() / 10;
    let train = shuffled.split_off(n_val);
    (train, shuffled)
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

/// The two-word phrase whose presence defines a positive example.
pub const MARKER_PHRASE: [&str; 2] = ["zephyra", "duskwell"];

const FILLERS: [&str; 44] = [
    "tamo", "rilk", "vost", "peln", "quar", "sibe", "lund", "fera", "gomi", "hask",
    "ixel", "jupo", "kree", "lomb", "mish", "nevi", "ospa", "prun", "quil", "rost",
    "sall", "tibb", "ulfa", "vrim", "wenn", "xipp", "yorl", "zemb", "ankor", "belda",
    "cruve", "dillo", "ettin", "folri", "gaspe", "hullo", "ivven", "jorma", "kelpi",
    "lorn", "mavis", "nubble", "ordo", "pleni",
];

fn splits_for(count: usize) -> impl Iterator<Item = Split> {
    let train = count * 4 / 5;
    (0..count).map(move |i| if i < train { Split::Train } else { Split::Test })
}

/// Generate `n` records, half positive, half negative. Positive sentences
/// contain [`MARKER_PHRASE`] at least once; each word gap additionally
/// receives the phrase with probability `marker_rate`. Negative sentences
/// never contain the marker words. Each class is split 80/20 into train and
/// test; ids are assigned after a final shuffle.
pub fn make_synthetic_corpus(
    n: usize,
    marker_rate: f64,
    seed: u64,
) -> Result<Vec<CorpusRecord>, CorpusError> {
    use rand::Rng;
    if n % 2 != 0 {
        return Err(CorpusError::OddCount { n });
    }
    if !(0.0..=1.0).contains(&marker_rate) {
        return Err(CorpusError::RateRange { value: marker_rate });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phrase = MARKER_PHRASE.join(" ");
    let per_class = n / 2;
    let mut records = Vec::with_capacity(n);
    for (positive, prefix) in [(true, "pos"), (false, "neg")] {
        for split in splits_for(per_class) {
            let len = rng.random_range(6..=12);
            let mut words: Vec<String> = (0..len)
                .map(|_| FILLERS[rng.random_range(0..FILLERS.len())].to_string())
                .collect();
            if positive {
                let mut inserted = false;
                let mut slot = 0;
                while slot <= words.len() {
                    if rng.random_range(0.0..1.0) < marker_rate {
                        words.insert(slot, phrase.clone());
                        inserted = true;
                        slot += 2;
                    } else {
                        slot += 1;
                    }
                }
                if !inserted {
                    let slot = rng.random_range(0..=words.len());
                    words.insert(slot, phrase.clone());
                }
            }
            records.push(CorpusRecord {
                // Ids are rewritten after the final shuffle; the prefix only
                // keeps intermediate records distinct for debugging.
                id: alloc::format!("{prefix}-tmp"),
                expression: if positive { phrase.clone() } else { String::new() },
                sentence: words.join(" "),
                idiom: positive,
                metaphor: Some(positive),
                split,
            });
        }
    }
    records.shuffle(&mut rng);
    for (i, r) in records.iter_mut().enumerate() {
        r.id = alloc::format!("syn-{:04}", i + 1);
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_tsv() -> &'static str {
        "id\texpression\tsentence\tidiom\tmetaphor\tsplit\n\
         r1\tkick the bucket\the kicked the bucket\tYes\tNo\ttrain\n\
         r2\t\tplain words here\tNo\tNo\ttest\n"
    }

    #[test]
    fn parses_full_rows() {
        let records = parse_tsv(sample_tsv()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].id, "r1");
        assert_eq!(records[0].expression, "kick the bucket");
        assert_eq!(records[0].sentence, "he kicked the bucket");
        assert!(records[0].idiom);
        assert_eq!(records[0].metaphor, Some(false));
        assert_eq!(records[0].split, Split::Train);
        assert_eq!(records[1].split, Split::Test);
    }

    #[test]
    fn header_only_is_empty() {
        let records = parse_tsv("id\texpression\tsentence\tidiom\tmetaphor\tsplit\n").unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn labels_trim_and_ignore_case() {
        let text = "id\texpression\tsentence\tidiom\tmetaphor\tsplit\n\
                    r1\t\tsome words\tyes \t NO\tTrain\n";
        let records = parse_tsv(text).unwrap();
        assert!(records[0].idiom);
        assert_eq!(records[0].metaphor, Some(false));
        assert_eq!(records[0].split, Split::Train);
    }

    #[test]
    fn five_column_corpus_lacks_metaphor() {
        let text = "id\texpression\tsentence\tidiom\tsplit\n\
                    r1\t\tsome words\tYes\ttrain\n";
        let records = parse_tsv(text).unwrap();
        assert_eq!(records[0].metaphor, None);
        assert!(records[0].label(Task::Idiom).unwrap());
        assert_eq!(
            records[0].label(Task::Metaphor),
            Err(CorpusError::MissingLabel {
                id: String::from("r1"),
                column: "metaphor"
            })
        );
    }

    #[test]
    fn bad_label_names_line_id_and_value() {
        let text = "id\texpression\tsentence\tidiom\tmetaphor\tsplit\n\
                    r1\t\tsome words\tmaybe\tNo\ttrain\n";
        assert_eq!(
            parse_tsv(text),
            Err(CorpusError::BadLabel {
                line: 2,
                id: String::from("r1"),
                column: "idiom",
                value: String::from("maybe"),
            })
        );
    }

    #[test]
    fn structural_errors_name_lines() {
        let dup = "id\texpression\tsentence\tidiom\tmetaphor\tsplit\n\
                   r1\t\ta b\tYes\tNo\ttrain\n\
                   r1\t\tc d\tNo\tNo\ttest\n";
        assert_eq!(
            parse_tsv(dup),
            Err(CorpusError::DuplicateId {
                line: 3,
                id: String::from("r1")
            })
        );
        let short = "id\texpression\tsentence\tidiom\tmetaphor\tsplit\nr1\t\ta b\tYes\n";
        assert_eq!(
            parse_tsv(short),
            Err(CorpusError::FieldCount {
                line: 2,
                expected: 6,
                got: 4
            })
        );
        let bad_header = "id\tsentence\tidiom\n";
        assert!(matches!(
            parse_tsv(bad_header),
            Err(CorpusError::Schema { .. })
        ));
        let blank = "id\texpression\tsentence\tidiom\tmetaphor\tsplit\n\
                     r1\t\t \tYes\tNo\ttrain\n";
        assert_eq!(
            parse_tsv(blank),
            Err(CorpusError::EmptyField {
                line: 2,
                column: "sentence"
            })
        );
    }

    #[test]
    fn round_trip_preserves_records() {
        let records = make_synthetic_corpus(20, 0.2, 5).unwrap();
        let text = render_tsv(&records).unwrap();
        let back = parse_tsv(&text).unwrap();
        assert_eq!(records, back);
    }

    #[test]
    fn unwritable_field_is_rejected() {
        let mut records = make_synthetic_corpus(2, 0.0, 1).unwrap();
        records[0].sentence.push('\t');
        assert_eq!(
            render_tsv(&records),
            Err(CorpusError::UnwritableField {
                id: records[0].id.clone(),
                column: "sentence"
            })
        );
    }

    #[test]
    fn balanced_subset_hits_exact_ratio() {
        let records = make_synthetic_corpus(60, 0.2, 9).unwrap();
        let subset = balanced_subset(&records, Task::Idiom, 20, 3).unwrap();
        assert_eq!(subset.len(), 20);
        let positives = subset.iter().filter(|r| r.idiom).count();
        assert_eq!(positives, 10);
        let mut ids: Vec<&str> = subset.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 20, "sampling must not repeat records");
        let again = balanced_subset(&records, Task::Idiom, 20, 3).unwrap();
        assert_eq!(subset, again);
        assert!(balanced_subset(&records, Task::Idiom, 0, 3).unwrap().is_empty());
    }

    #[test]
    fn balanced_subset_errors_report_counts() {
        let records = make_synthetic_corpus(10, 0.2, 9).unwrap();
        assert_eq!(
            balanced_subset(&records, Task::Idiom, 7, 0),
            Err(CorpusError::OddCount { n: 7 })
        );
        assert_eq!(
            balanced_subset(&records, Task::Idiom, 12, 0),
            Err(CorpusError::Insufficient {
                needed_per_class: 6,
                positives: 5,
                negatives: 5
            })
        );
    }

    #[test]
    fn synthetic_corpus_marks_positives_exactly() {
        let records = make_synthetic_corpus(200, 0.2, 7).unwrap();
        assert_eq!(records.len(), 200);
        let phrase = MARKER_PHRASE.join(" ");
        let mut positives = 0;
        for r in &records {
            let has_marker = r.sentence.contains(&phrase);
            assert_eq!(r.idiom, has_marker, "label must follow marker presence");
            assert_eq!(r.metaphor, Some(has_marker));
            if has_marker {
                positives += 1;
                assert_eq!(r.expression, phrase);
            } else {
                assert!(r.expression.is_empty());
                for w in MARKER_PHRASE {
                    assert!(!r.sentence.contains(w), "marker word leaked into negative");
                }
            }
        }
        assert_eq!(positives, 100);
    }

    #[test]
    fn synthetic_corpus_splits_each_class_80_20() {
        let records = make_synthetic_corpus(200, 0.2, 7).unwrap();
        let count = |split: Split, positive: bool| {
            records
                .iter()
                .filter(|r| r.split == split && r.idiom == positive)
                .count()
        };
        assert_eq!(count(Split::Train, true), 80);
        assert_eq!(count(Split::Train, false), 80);
        assert_eq!(count(Split::Test, true), 20);
        assert_eq!(count(Split::Test, false), 20);
    }

    #[test]
    fn synthetic_corpus_is_seed_deterministic() {
        let a = make_synthetic_corpus(40, 0.3, 11).unwrap();
        let b = make_synthetic_corpus(40, 0.3, 11).unwrap();
        let c = make_synthetic_corpus(40, 0.3, 12).unwrap();
        assert_eq!(render_tsv(&a).unwrap(), render_tsv(&b).unwrap());
        assert_ne!(render_tsv(&a).unwrap(), render_tsv(&c).unwrap());
        assert_eq!(
            make_synthetic_corpus(3, 0.2, 1),
            Err(CorpusError::OddCount { n: 3 })
        );
        assert_eq!(
            make_synthetic_corpus(4, 1.5, 1),
            Err(CorpusError::RateRange { value: 1.5 })
        );
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = make_synthetic_corpus(20, 0.2, 3).unwrap();
        let b = make_synthetic_corpus(20, 0.2, 3).unwrap();
        let c = make_synthetic_corpus(20, 0.2, 4).unwrap();
        let fa = fingerprint(&a).unwrap();
        assert_eq!(fa.len(), 64);
        assert!(fa.chars().all(|ch| ch.is_ascii_hexdigit()));
        assert_eq!(fa, fingerprint(&b).unwrap());
        assert_ne!(fa, fingerprint(&c).unwrap());
    }

    #[test]
    fn validation_carve_is_a_tenth() {
        let records = make_synthetic_corpus(200, 0.2, 7).unwrap();
        let train = by_split(&records, Split::Train);
        assert_eq!(train.len(), 160);
        let (rest, val) = carve_validation(&train, 13);
        assert_eq!(val.len(), 16);
        assert_eq!(rest.len(), 144);
        let mut ids: Vec<&str> = rest.iter().chain(val.iter()).map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 160, "carve must partition the records");
        let (rest2, val2) = carve_validation(&train, 13);
        assert_eq!(rest, rest2);
        assert_eq!(val, val2);
    }

    #[test]
    fn task_parsing() {
        assert_eq!("idiom".parse::<Task>().unwrap(), Task::Idiom);
        assert_eq!(" Metaphor ".parse::<Task>().unwrap(), Task::Metaphor);
        assert!("both".parse::<Task>().is_err());
        assert_eq!(Task::Idiom.column(), "idiom");
    }
}
