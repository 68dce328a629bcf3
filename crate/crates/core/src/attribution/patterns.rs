use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{enumerate_candidates, rank_candidates, resolve_label, unknown_chars, CandidateMode, Result};
use crate::cd::WordAttributor;
use crate::corpus::WordSample;
use crate::models::{argmax, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternCount {
    pub pattern: String,
    pub count: usize,
    /// Share of the words counted for this length.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthPatterns {
    pub length: usize,
    pub words: usize,
    pub patterns: Vec<PatternCount>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternTable {
    pub class: String,
    pub value: String,
    /// Words carrying the value that the model also predicted.
    pub correct_words: usize,
    /// Words carrying the value in the input.
    pub gold_words: usize,
    pub skipped: Vec<String>,
    pub lengths: Vec<LengthPatterns>,
}

/// Characters of the set from its first to last position, `_` for positions
/// outside the set, and `$` when the set reaches the end of the word.
pub fn render_pattern(surface: &str, chars: &[usize]) -> String {
    let cs: Vec<char> = surface.chars().collect();
    let (Some(&lo), Some(&hi)) = (chars.first(), chars.last()) else {
        return String::new();
    };
    let mut out: String = (lo..=hi)
        .map(|i| if chars.contains(&i) { cs[i] } else { '_' })
        .collect();
    if hi + 1 == cs.len() {
        out.push('$');
    }
    out
}

/// For every correctly predicted word with gold `class=value`, the highest
/// scoring character set of each requested cardinality (any positions),
/// aggregated into pattern frequencies.
pub fn pattern_frequency(
    model: &Model,
    words: &[WordSample],
    class: &str,
    value: &str,
    lengths: &[usize],
) -> Result<PatternTable> {
    let (k, j) = resolve_label(model, class, value)?;
    let heads = model.heads();
    let mut counts: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); lengths.len()];
    let mut totals = vec![0usize; lengths.len()];
    let mut table = PatternTable {
        class: class.to_string(),
        value: value.to_string(),
        correct_words: 0,
        gold_words: 0,
        skipped: Vec::new(),
        lengths: Vec::new(),
    };
    for w in words.iter().filter(|w| w.label(class) == value) {
        table.gold_words += 1;
        if !unknown_chars(model, &w.surface).is_empty() {
            table.skipped.push(w.surface.clone());
            continue;
        }
        if argmax(&model.logits(&w.surface)?[k]) != j {
            continue;
        }
        table.correct_words += 1;
        let attributor = WordAttributor::new(model, &w.surface)?;
        let scorer = attributor.scorer(heads.heads[k], j)?;
        let len = w.char_len();
        for (slot, &n) in lengths.iter().enumerate() {
            if n == 0 || n > len {
                continue;
            }
            let cands = enumerate_candidates(len, n, CandidateMode::All)?;
            let ranked = rank_candidates(&scorer, attributor.ids(), &cands.sets)?;
            let best = ranked[0].index_set.char_positions(len);
            *counts[slot].entry(render_pattern(&w.surface, &best)).or_default() += 1;
            totals[slot] += 1;
        }
    }
    for ((&length, c), words) in lengths.iter().zip(counts).zip(totals) {
        let mut patterns: Vec<PatternCount> = c
            .into_iter()
            .map(|(pattern, count)| PatternCount {
                pattern,
                count,
                rate: count as f64 / words as f64,
            })
            .collect();
        patterns.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.pattern.cmp(&b.pattern)));
        table.lengths.push(LengthPatterns {
            length,
            words,
            patterns,
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendering() {
        assert_eq!(render_pattern("kronor", &[5]), "r$");
        assert_eq!(render_pattern("kronor", &[1, 3]), "r_n");
        assert_eq!(render_pattern("casas", &[1, 3, 4]), "a_as$");
        assert_eq!(render_pattern("ab", &[]), "");
    }
}
