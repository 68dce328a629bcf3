use serde::{Deserialize, Serialize};

use super::{AttributionError, Result};
use crate::cd::{IndexSet, LabelScorer};

/// Words longer than this get a reduced `all`-mode candidate space.
pub const ALL_MODE_CHAR_CAP: usize = 16;
/// Largest cardinality enumerated exhaustively for capped words.
pub const CAPPED_MAX_CARDINALITY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateMode {
    Consecutive,
    All,
}

impl std::fmt::Display for CandidateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CandidateMode::Consecutive => "cons",
            CandidateMode::All => "all",
        })
    }
}

impl std::str::FromStr for CandidateMode {
    type Err = AttributionError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cons" | "consecutive" => Ok(CandidateMode::Consecutive),
            "all" => Ok(CandidateMode::All),
            other => Err(AttributionError::Config(format!("unknown candidate mode {other:?}"))),
        }
    }
}

/// Candidate sets as sorted surface character positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidates {
    pub sets: Vec<Vec<usize>>,
    /// True when the word exceeded [`ALL_MODE_CHAR_CAP`] and the `all`-mode
    /// space was reduced.
    pub capped: bool,
}

fn windows(len: usize, k: usize) -> Vec<Vec<usize>> {
    (0..=len - k).map(|s| (s..s + k).collect()).collect()
}

/// k-subsets of `0..len` in lexicographic order.
fn subsets(len: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == len - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Candidate sets of cardinality `k` over a word of `len` real characters.
/// For capped words in `all` mode, `k` above [`CAPPED_MAX_CARDINALITY`]
/// falls back to windows.
pub fn enumerate_candidates(len: usize, k: usize, mode: CandidateMode) -> Result<Candidates> {
    if k == 0 || k > len {
        return Err(AttributionError::Cardinality { k, len });
    }
    Ok(match mode {
        CandidateMode::Consecutive => Candidates {
            sets: windows(len, k),
            capped: false,
        },
        CandidateMode::All if len <= ALL_MODE_CHAR_CAP => Candidates {
            sets: subsets(len, k),
            capped: false,
        },
        CandidateMode::All if k <= CAPPED_MAX_CARDINALITY => Candidates {
            sets: subsets(len, k),
            capped: true,
        },
        CandidateMode::All => Candidates {
            sets: windows(len, k),
            capped: true,
        },
    })
}

/// Every non-empty candidate set of any cardinality, as bit masks over
/// character positions (bit `i` = character `i`).
pub fn all_candidate_masks(len: usize) -> (Vec<u64>, bool) {
    if len == 0 {
        return (Vec::new(), false);
    }
    if len <= ALL_MODE_CHAR_CAP {
        return ((1u64..1 << len).collect(), false);
    }
    let mut masks: Vec<u64> = Vec::new();
    for k in 1..=len {
        let sets = if k <= CAPPED_MAX_CARDINALITY {
            subsets(len, k)
        } else {
            windows(len, k)
        };
        masks.extend(sets.iter().map(|s| s.iter().fold(0u64, |m, &i| m | 1 << i)));
    }
    masks.sort_unstable();
    masks.dedup();
    (masks, true)
}

pub fn mask_to_chars(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub index_set: IndexSet,
    pub score: f64,
}

/// Scores every candidate and sorts by descending score; ties keep the
/// lexicographically smaller set first.
pub fn rank_candidates(
    scorer: &LabelScorer<'_>,
    ids: &[usize],
    candidates: &[Vec<usize>],
) -> Result<Vec<AttributionResult>> {
    let mut out = candidates
        .iter()
        .map(|c| {
            Ok(AttributionResult {
                index_set: IndexSet::from_chars(c.iter().copied(), ids)?,
                score: scorer.score_chars(c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.index_set.cmp(&b.index_set)));
    Ok(out)
}
