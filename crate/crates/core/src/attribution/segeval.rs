use serde::{Deserialize, Serialize};

use super::{enumerate_candidates, rank_candidates, resolve_label, unknown_chars, CandidateMode, Result};
use crate::cd::{IndexSet, WordAttributor};
use crate::corpus::SegmentAnnotation;
use crate::models::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedAnnotation {
    pub surface: String,
    pub feature: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegEvalReport {
    pub mode: CandidateMode,
    pub total: usize,
    pub evaluated: usize,
    /// `correct[k-1]`: annotations whose segment is among the top k.
    pub correct: Vec<usize>,
    /// Evaluated words whose candidate space was reduced by the cap.
    pub capped: usize,
    pub skipped: Vec<SkippedAnnotation>,
}

impl SegEvalReport {
    pub fn rate(&self, k: usize) -> f64 {
        if self.evaluated == 0 {
            0.0
        } else {
            self.correct[k - 1] as f64 / self.evaluated as f64
        }
    }
}

/// For each annotation, ranks all candidate sets with the segment's
/// cardinality and records the rank of the segment itself.
pub fn topk_segmentation_eval(
    model: &Model,
    annotations: &[SegmentAnnotation],
    k_max: usize,
    mode: CandidateMode,
) -> Result<SegEvalReport> {
    let mut report = SegEvalReport {
        mode,
        total: annotations.len(),
        evaluated: 0,
        correct: vec![0; k_max],
        capped: 0,
        skipped: Vec::new(),
    };
    let heads = model.heads();
    for a in annotations {
        let skip = |reason: String| SkippedAnnotation {
            surface: a.surface.clone(),
            feature: format!("{}={}", a.class, a.value),
            reason,
        };
        let (k, j) = match resolve_label(model, &a.class, &a.value) {
            Ok(kj) => kj,
            Err(e) => {
                report.skipped.push(skip(e.to_string()));
                continue;
            }
        };
        let missing = unknown_chars(model, &a.surface);
        if !missing.is_empty() {
            report
                .skipped
                .push(skip(format!("characters outside the vocabulary: {missing:?}")));
            continue;
        }
        let len = a.surface.chars().count();
        if a.indices.is_empty() || a.indices.iter().any(|&i| i >= len) {
            report
                .skipped
                .push(skip(format!("segment {:?} outside word of length {len}", a.indices)));
            continue;
        }
        let cands = enumerate_candidates(len, a.indices.len(), mode)?;
        let attributor = WordAttributor::new(model, &a.surface)?;
        let scorer = attributor.scorer(heads.heads[k], j)?;
        let ranked = rank_candidates(&scorer, attributor.ids(), &cands.sets)?;
        let target = IndexSet::from_chars(a.indices.iter().copied(), attributor.ids())?;
        report.evaluated += 1;
        report.capped += cands.capped as usize;
        if let Some(rank) = ranked.iter().position(|r| r.index_set == target) {
            for c in report.correct.iter_mut().skip(rank) {
                *c += 1;
            }
        }
    }
    Ok(report)
}
