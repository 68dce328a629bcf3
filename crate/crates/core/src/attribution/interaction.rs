use serde::{Deserialize, Serialize};

use super::{all_candidate_masks, mask_to_chars, resolve_label, unknown_chars, Result};
use crate::cd::WordAttributor;
use crate::corpus::WordSample;
use crate::models::{argmax, Model};
use crate::stats::{dunn_pairwise, kruskal_wallis, Group, KruskalWallis, PairwiseComparison};

/// Longest word whose candidate sets fit a 64-bit sequence mask.
const MAX_WORD_CHARS: usize = 62;

pub const GROUP_NAMES: [&str; 3] = ["wf_pf", "wnf_pf", "wnf_pnf"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordExtremes {
    pub word: String,
    pub group: String,
    pub max_score: f64,
    pub max_set: Vec<usize>,
    pub min_score: f64,
    pub min_set: Vec<usize>,
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub name: String,
    pub size: usize,
    pub max_median: Option<f64>,
    pub min_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreComparison {
    pub kruskal_wallis: Option<KruskalWallis>,
    pub pairwise: Vec<PairwiseComparison>,
    pub notices: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub class: String,
    pub value: String,
    /// Words passing the selector.
    pub selected: usize,
    /// Selected words carrying the value but predicted otherwise; not part
    /// of any group.
    pub excluded: usize,
    pub skipped: Vec<String>,
    pub groups: Vec<GroupSummary>,
    pub max_scores: ScoreComparison,
    pub min_scores: ScoreComparison,
    pub words: Vec<WordExtremes>,
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 {
        s[m]
    } else {
        (s[m - 1] + s[m]) / 2.0
    })
}

fn compare(groups: &[Group]) -> ScoreComparison {
    let mut notices = Vec::new();
    let usable: Vec<Group> = groups
        .iter()
        .filter(|g| {
            let ok = g.values.len() >= 2;
            if !ok {
                notices.push(format!(
                    "group {} has {} member(s); left out of the tests",
                    g.name,
                    g.values.len()
                ));
            }
            ok
        })
        .cloned()
        .collect();
    if usable.len() < 2 {
        notices.push("fewer than two usable groups; statistics skipped".into());
        return ScoreComparison {
            kruskal_wallis: None,
            pairwise: Vec::new(),
            notices,
        };
    }
    match (kruskal_wallis(&usable), dunn_pairwise(&usable)) {
        (Ok(kw), Ok(pairwise)) => ScoreComparison {
            kruskal_wallis: Some(kw),
            pairwise,
            notices,
        },
        (Err(e), _) | (_, Err(e)) => {
            notices.push(format!("statistics skipped: {e}"));
            ScoreComparison {
                kruskal_wallis: None,
                pairwise: Vec::new(),
                notices,
            }
        }
    }
}

/// Splits the selected words by gold/predicted `class=value` into
/// `wf_pf` (has it, predicted), `wnf_pf` (lacks it, predicted) and
/// `wnf_pnf` (lacks it, not predicted), finds each word's most positive and
/// most negative character set of any cardinality, and compares the groups.
pub fn interaction_analysis(
    model: &Model,
    words: &[WordSample],
    selector: impl Fn(&WordSample) -> bool,
    class: &str,
    value: &str,
) -> Result<InteractionReport> {
    let (k, j) = resolve_label(model, class, value)?;
    let heads = model.heads();
    let mut report = InteractionReport {
        class: class.to_string(),
        value: value.to_string(),
        selected: 0,
        excluded: 0,
        skipped: Vec::new(),
        groups: Vec::new(),
        max_scores: ScoreComparison {
            kruskal_wallis: None,
            pairwise: Vec::new(),
            notices: Vec::new(),
        },
        min_scores: ScoreComparison {
            kruskal_wallis: None,
            pairwise: Vec::new(),
            notices: Vec::new(),
        },
        words: Vec::new(),
    };
    for w in words.iter().filter(|w| selector(w)) {
        report.selected += 1;
        let len = w.char_len();
        if len == 0 || len > MAX_WORD_CHARS || !unknown_chars(model, &w.surface).is_empty() {
            report.skipped.push(w.surface.clone());
            continue;
        }
        let gold = w.label(class) == value;
        let predicted = argmax(&model.logits(&w.surface)?[k]) == j;
        let group = match (gold, predicted) {
            (true, true) => GROUP_NAMES[0],
            (false, true) => GROUP_NAMES[1],
            (false, false) => GROUP_NAMES[2],
            (true, false) => {
                report.excluded += 1;
                continue;
            }
        };
        let attributor = WordAttributor::new(model, &w.surface)?;
        let scorer = attributor.scorer(heads.heads[k], j)?;
        let (masks, capped) = all_candidate_masks(len);
        let (mut best, mut worst) = ((f64::NEG_INFINITY, 0u64), (f64::INFINITY, 0u64));
        for m in masks {
            let s = scorer.score_char_mask(m)?;
            if s > best.0 {
                best = (s, m);
            }
            if s < worst.0 {
                worst = (s, m);
            }
        }
        report.words.push(WordExtremes {
            word: w.surface.clone(),
            group: group.to_string(),
            max_score: best.0,
            max_set: mask_to_chars(best.1),
            min_score: worst.0,
            min_set: mask_to_chars(worst.1),
            capped,
        });
    }
    let collect = |name: &str, f: fn(&WordExtremes) -> f64| {
        Group::new(name, report.words.iter().filter(|x| x.group == name).map(f).collect())
    };
    let max_groups: Vec<Group> = GROUP_NAMES.iter().map(|n| collect(n, |x| x.max_score)).collect();
    let min_groups: Vec<Group> = GROUP_NAMES.iter().map(|n| collect(n, |x| x.min_score)).collect();
    report.groups = max_groups
        .iter()
        .zip(&min_groups)
        .map(|(a, b)| GroupSummary {
            name: a.name.clone(),
            size: a.values.len(),
            max_median: median(&a.values),
            min_median: median(&b.values),
        })
        .collect();
    report.max_scores = compare(&max_groups);
    report.min_scores = compare(&min_groups);
    Ok(report)
}
