//! Corpus ingestion: CoNLL-U words, feature schemas, character vocabularies,
//! character-level segmentation annotations, synthetic-token injection and
//! rule-generated toy corpora.

mod conllu;
mod schema;
mod segmentation;
mod synthetic;
mod toy;
mod vocab;

pub use conllu::{parse_conllu, read_conllu_tokens, write_conllu, RawToken, FINNISH_SKIP_LINES};
pub use schema::{FeatureClass, FeatureSchema, NA_LABEL};
pub use segmentation::{convert_segment_listing, parse_segmentation, write_segmentation, SegmentAnnotation};
pub use synthetic::{binary_subset, inject_synthetic, InjectedSample, SyntheticConfig};
pub use toy::{generate_toy_corpus, Ruleset, SuffixRule, ToyCorpus, ToyFeature};
pub use vocab::{encode_word, singleton_chars, CharVocab, END_ID, PAD_ID, START_ID, UNK_ID};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unknown value {value:?} for feature class {class}")]
    UnknownValue { class: String, value: String },
    #[error("unknown feature class {0}")]
    UnknownClass(String),
    #[error("line {line}: index {index} out of range for {surface:?} ({len} characters)")]
    IndexOutOfRange {
        line: usize,
        surface: String,
        index: usize,
        len: usize,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// A word and its morphological labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSample {
    pub surface: String,
    /// Class name to label; classes of the active schema that do not apply
    /// carry [`NA_LABEL`].
    pub features: BTreeMap<String, String>,
}

impl WordSample {
    pub fn new(surface: impl Into<String>, features: BTreeMap<String, String>) -> Self {
        WordSample {
            surface: surface.into(),
            features,
        }
    }

    pub fn label(&self, class: &str) -> &str {
        self.features.get(class).map(String::as_str).unwrap_or(NA_LABEL)
    }

    pub fn char_len(&self) -> usize {
        self.surface.chars().count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupStats {
    pub input: usize,
    pub kept: usize,
    pub duplicates: usize,
    /// Duplicates whose features differ from the kept occurrence.
    pub conflicts: usize,
}

/// Drops repeated surfaces, keeping the first occurrence.
pub fn dedupe(samples: Vec<WordSample>) -> (Vec<WordSample>, DedupStats) {
    let mut stats = DedupStats {
        input: samples.len(),
        ..Default::default()
    };
    let mut first: HashMap<String, usize> = HashMap::new();
    let mut kept: Vec<WordSample> = Vec::new();
    for s in samples {
        match first.get(&s.surface) {
            Some(&i) => {
                stats.duplicates += 1;
                if kept[i].features != s.features {
                    stats.conflicts += 1;
                    log::debug!("conflicting duplicate {:?}", s.surface);
                }
            }
            None => {
                first.insert(s.surface.clone(), kept.len());
                kept.push(s);
            }
        }
    }
    stats.kept = kept.len();
    (kept, stats)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<WordSample>,
    pub valid: Vec<WordSample>,
    pub test: Vec<WordSample>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    pub train: DedupStats,
    pub valid: DedupStats,
    pub test: DedupStats,
}

/// Deduplicates each designated split independently.
pub fn dedupe_and_split(
    train: Vec<WordSample>,
    valid: Vec<WordSample>,
    test: Vec<WordSample>,
) -> Result<(Splits, SplitReport)> {
    if train.is_empty() && valid.is_empty() && test.is_empty() {
        return Err(CorpusError::Empty("no samples in any split"));
    }
    let (train, tr) = dedupe(train);
    let (valid, va) = dedupe(valid);
    let (test, te) = dedupe(test);
    for (name, s) in [("train", &tr), ("valid", &va), ("test", &te)] {
        if s.conflicts > 0 {
            log::info!("{name}: {} duplicate surfaces with conflicting features", s.conflicts);
        }
    }
    Ok((
        Splits { train, valid, test },
        SplitReport {
            train: tr,
            valid: va,
            test: te,
        },
    ))
}
