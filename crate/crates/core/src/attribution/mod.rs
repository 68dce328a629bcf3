//! Evaluation protocols built on contextual decomposition: candidate ranking,
//! top-k agreement with segment annotations, synthetic-token validation,
//! pattern mining and group-wise interaction statistics.

mod candidates;
mod interaction;
mod patterns;
mod segeval;
mod synthetic;

pub use candidates::{
    all_candidate_masks, enumerate_candidates, mask_to_chars, rank_candidates, AttributionResult, CandidateMode,
    Candidates, ALL_MODE_CHAR_CAP, CAPPED_MAX_CARDINALITY,
};
pub use interaction::{interaction_analysis, GroupSummary, InteractionReport, ScoreComparison};
pub use patterns::{pattern_frequency, render_pattern, PatternCount, PatternTable};
pub use segeval::{topk_segmentation_eval, SegEvalReport, SkippedAnnotation};
pub use synthetic::{synthetic_experiment, LevelResult, SeedCounts, SyntheticCurves, SyntheticSetup};

use thiserror::Error;

use crate::cd::{CdError, WordAttributor};
use crate::corpus::CorpusError;
use crate::models::{Model, ModelError};
use crate::stats::StatsError;

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("cardinality {k} not in 1..={len}")]
    Cardinality { k: usize, len: usize },
    #[error("class {0:?} not in the model schema")]
    UnknownClass(String),
    #[error("value {value:?} not a label of class {class:?}")]
    UnknownValue { class: String, value: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Cd(#[from] CdError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub type Result<T> = std::result::Result<T, AttributionError>;

/// `(head index, label index)` of `class=value` in the model schema.
pub fn resolve_label(model: &Model, class: &str, value: &str) -> Result<(usize, usize)> {
    let k = model
        .schema
        .class_index(class)
        .ok_or_else(|| AttributionError::UnknownClass(class.to_string()))?;
    let j = model.schema.classes[k]
        .label_index(value)
        .ok_or_else(|| AttributionError::UnknownValue {
            class: class.to_string(),
            value: value.to_string(),
        })?;
    Ok((k, j))
}

/// Characters of `surface` missing from the model vocabulary.
pub(crate) fn unknown_chars(model: &Model, surface: &str) -> Vec<char> {
    surface.chars().filter(|&c| !model.vocab.contains(c)).collect()
}

/// Singleton scores for every real character of `surface`, in position order.
pub fn singleton_scores(model: &Model, surface: &str, class: &str, value: &str) -> Result<Vec<f64>> {
    let (k, j) = resolve_label(model, class, value)?;
    let attributor = WordAttributor::new(model, surface)?;
    let heads = model.heads();
    let scorer = attributor.scorer(heads.heads[k], j)?;
    (0..surface.chars().count())
        .map(|c| Ok(scorer.score_chars(&[c])?))
        .collect()
}
