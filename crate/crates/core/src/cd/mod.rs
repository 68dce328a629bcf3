//! Contextual decomposition: splits every activation of a frozen encoder into
//! a part attributable to a chosen set of input positions (β) and the rest
//! (γ, which also absorbs biases).

mod cnn;
mod lstm;

pub use cnn::{cd_cnn, CnnAttributor, CnnLabelTable};
pub use lstm::cd_lstm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PAD_ID;
use crate::models::{Architecture, Head, Model, ModelError};

#[derive(Debug, Error)]
pub enum CdError {
    #[error("position {position} outside sequence of length {len}")]
    OutOfBounds { position: usize, len: usize },
    #[error("position {0} is padding and cannot be attributed")]
    PadPosition(usize),
    #[error("cannot enumerate orderings of {0} components (at most {MAX_COMPONENTS})")]
    TooManyComponents(usize),
    #[error("window [{start}, {end}) exceeds sequence of length {len}")]
    Window { start: usize, end: usize, len: usize },
    #[error("label index {index} out of range for a head with {labels} labels")]
    BadLabel { index: usize, labels: usize },
    #[error("decomposition has dimension {actual}, head expects {expected}")]
    Dimension { expected: usize, actual: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, CdError>;

/// Largest component count linearized by exhaustive ordering (6! = 720).
pub const MAX_COMPONENTS: usize = 6;

/// Sorted, duplicate-free positions into an encoded sequence
/// (position 0 is the start symbol).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    /// Validates `positions` against the encoded sequence `ids`.
    pub fn new(positions: impl IntoIterator<Item = usize>, ids: &[usize]) -> Result<Self> {
        let mut v: Vec<usize> = positions.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        for &p in &v {
            if p >= ids.len() {
                return Err(CdError::OutOfBounds {
                    position: p,
                    len: ids.len(),
                });
            }
            if ids[p] == PAD_ID {
                return Err(CdError::PadPosition(p));
            }
        }
        Ok(IndexSet(v))
    }

    /// From 0-based character positions of the surface form.
    pub fn from_chars(chars: impl IntoIterator<Item = usize>, ids: &[usize]) -> Result<Self> {
        Self::new(chars.into_iter().map(|c| c + 1), ids)
    }

    pub fn empty() -> Self {
        IndexSet(Vec::new())
    }

    pub fn positions(&self) -> &[usize] {
        &self.0
    }

    /// Positions shifted back to surface character indices (boundary
    /// symbols dropped).
    pub fn char_positions(&self, word_len: usize) -> Vec<usize> {
        self.0
            .iter()
            .filter(|&&p| p >= 1 && p <= word_len)
            .map(|p| p - 1)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, p: usize) -> bool {
        self.0.binary_search(&p).is_ok()
    }

    /// Membership mask of length `len`.
    pub fn mask(&self, len: usize) -> Vec<bool> {
        let mut m = vec![false; len];
        for &p in &self.0 {
            if p < len {
                m[p] = true;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl Decomposition {
    pub fn total(&self) -> Vec<f64> {
        self.beta.iter().zip(&self.gamma).map(|(b, g)| b + g).collect()
    }
}

/// Rearranges `perm` into the next lexicographic permutation; false once the
/// last one has been passed.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// Writes `L_f(y_k)` into `out`: the change in `f` when `y_k` is added to the
/// running sum, averaged over all orderings of the components.
pub(crate) fn linearize_into(ys: &[f64], f: impl Fn(f64) -> f64, out: &mut [f64]) -> Result<()> {
    let n = ys.len();
    if n > MAX_COMPONENTS {
        return Err(CdError::TooManyComponents(n));
    }
    out[..n].fill(0.0);
    if n == 0 {
        return Ok(());
    }
    let mut perm = [0usize; MAX_COMPONENTS];
    for (i, p) in perm.iter_mut().enumerate().take(n) {
        *p = i;
    }
    let mut count = 0usize;
    loop {
        let mut partial = 0.0;
        let mut f_prev = f(0.0);
        for &k in &perm[..n] {
            partial += ys[k];
            let f_next = f(partial);
            out[k] += f_next - f_prev;
            f_prev = f_next;
        }
        count += 1;
        if !next_permutation(&mut perm[..n]) {
            break;
        }
    }
    let scale = count as f64;
    for v in &mut out[..n] {
        *v /= scale;
    }
    Ok(())
}

/// Splits `f(Σ y) − f(0)` over the components `ys`.
pub fn linearize_activation(ys: &[f64], f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; ys.len()];
    linearize_into(ys, f, &mut out)?;
    Ok(out)
}

pub(crate) fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// `(β_c, γ_c)` after ReLU; the bias share goes to γ.
pub fn decompose_relu(beta_z: f64, gamma_z: f64, bias: f64) -> (f64, f64) {
    let mut l = [0.0; 3];
    linearize_into(&[beta_z, gamma_z, bias], relu, &mut l).expect("three components");
    (l[0], l[1] + l[2])
}

/// Per-position `(β, γ)` reduced at the first position of the largest `c`.
pub fn decompose_maxpool(beta: &[f64], gamma: &[f64], c: &[f64]) -> Option<(f64, f64, usize)> {
    if c.is_empty() || beta.len() != c.len() || gamma.len() != c.len() {
        return None;
    }
    let t = crate::models::argmax(c);
    Some((beta[t], gamma[t], t))
}

/// `(β_t, γ_t, b)` for one filter row `weight` (`n` column blocks of width
/// `d`) at window start `t` over the flattened embedded sequence `x`.
pub fn decompose_conv(
    weight: &[f64],
    bias: f64,
    x: &[f64],
    d: usize,
    in_set: &[bool],
    t: usize,
) -> Result<(f64, f64, f64)> {
    let n = weight.len() / d;
    let len = x.len() / d;
    if t + n > len {
        return Err(CdError::Window {
            start: t,
            end: t + n,
            len,
        });
    }
    let mut beta = 0.0;
    let mut gamma = 0.0;
    for i in 0..n {
        let u = crate::tensor::dot(&weight[i * d..(i + 1) * d], &x[(t + i) * d..(t + i + 1) * d]);
        if in_set[t + i] {
            beta += u;
        } else {
            gamma += u;
        }
    }
    Ok((beta, gamma, bias))
}

/// Score of one label split into relevant, irrelevant and bias parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassContribution {
    /// `W_j · β`
    pub beta_score: f64,
    /// `W_j · γ`
    pub gamma_score: f64,
    pub bias: f64,
}

impl ClassContribution {
    pub fn logit(&self) -> f64 {
        self.beta_score + self.gamma_score + self.bias
    }
}

pub fn class_contribution(head: &Head<'_>, dec: &Decomposition, label: usize) -> Result<ClassContribution> {
    if label >= head.num_labels() {
        return Err(CdError::BadLabel {
            index: label,
            labels: head.num_labels(),
        });
    }
    if dec.beta.len() != head.input_dim() || dec.gamma.len() != head.input_dim() {
        return Err(CdError::Dimension {
            expected: head.input_dim(),
            actual: dec.beta.len(),
        });
    }
    let w = head.weight.row(label);
    Ok(ClassContribution {
        beta_score: crate::tensor::dot(w, &dec.beta),
        gamma_score: crate::tensor::dot(w, &dec.gamma),
        bias: head.bias.data()[label],
    })
}

/// Decomposition of the word representation for either encoder.
pub fn decompose(model: &Model, ids: &[usize], set: &IndexSet) -> Result<Decomposition> {
    match model.architecture() {
        Architecture::Cnn => cd_cnn(&model.cnn().unwrap(), ids, set),
        Architecture::Bilstm => cd_lstm(&model.bilstm().unwrap(), ids, set),
    }
}

/// Scores many index sets of one word. The CNN path reuses the forward pass
/// (pooling positions do not depend on the set).
pub enum WordAttributor<'m> {
    Cnn(CnnAttributor),
    Bilstm { model: &'m Model, ids: Vec<usize> },
}

impl<'m> WordAttributor<'m> {
    pub fn new(model: &'m Model, surface: &str) -> Result<Self> {
        let ids = model.encode(surface);
        Ok(match model.architecture() {
            Architecture::Cnn => WordAttributor::Cnn(CnnAttributor::new(&model.cnn().unwrap(), &ids)?),
            Architecture::Bilstm => WordAttributor::Bilstm { model, ids },
        })
    }

    pub fn ids(&self) -> &[usize] {
        match self {
            WordAttributor::Cnn(a) => a.ids(),
            WordAttributor::Bilstm { ids, .. } => ids,
        }
    }

    pub fn decompose(&self, set: &IndexSet) -> Result<Decomposition> {
        match self {
            WordAttributor::Cnn(a) => a.decompose(set),
            WordAttributor::Bilstm { model, ids } => cd_lstm(&model.bilstm().unwrap(), ids, set),
        }
    }

    /// `W_j · β` for label `label` of `head`.
    pub fn score(&self, head: &Head<'_>, label: usize, set: &IndexSet) -> Result<f64> {
        match self {
            WordAttributor::Cnn(a) => a.score(head, label, set),
            _ => Ok(class_contribution(head, &self.decompose(set)?, label)?.beta_score),
        }
    }
}

/// `W_j · β` for one fixed label, reusable across many index sets.
pub enum LabelScorer<'a> {
    Table(CnnLabelTable),
    Direct {
        attributor: &'a WordAttributor<'a>,
        head: Head<'a>,
        label: usize,
    },
}

impl LabelScorer<'_> {
    pub fn score(&self, set: &IndexSet) -> Result<f64> {
        match self {
            LabelScorer::Table(t) => t.score(set),
            LabelScorer::Direct {
                attributor,
                head,
                label,
            } => attributor.score(head, *label, set),
        }
    }

    /// Score of the set whose surface character positions are the set bits
    /// of `mask`; the word must have at most 62 characters.
    pub fn score_char_mask(&self, mask: u64) -> Result<f64> {
        match self {
            LabelScorer::Table(t) => Ok(t.score_bits(mask << 1)),
            LabelScorer::Direct { .. } => {
                let chars: Vec<usize> = (0..64).filter(|i| mask >> i & 1 == 1).collect();
                self.score_chars(&chars)
            }
        }
    }

    /// Score of the set given as surface character positions. Positions
    /// must be valid for the word.
    pub fn score_chars(&self, chars: &[usize]) -> Result<f64> {
        match self {
            LabelScorer::Table(t) => Ok(t.score_bits(chars.iter().fold(0u64, |acc, &c| acc | 1 << (c + 1)))),
            LabelScorer::Direct { attributor, .. } => {
                self.score(&IndexSet::from_chars(chars.iter().copied(), attributor.ids())?)
            }
        }
    }
}

impl<'m> WordAttributor<'m> {
    pub fn scorer<'s>(&'s self, head: Head<'s>, label: usize) -> Result<LabelScorer<'s>>
    where
        'm: 's,
    {
        if let WordAttributor::Cnn(a) = self {
            if let Some(t) = a.label_table(&head, label)? {
                return Ok(LabelScorer::Table(t));
            }
        }
        if label >= head.num_labels() {
            return Err(CdError::BadLabel {
                index: label,
                labels: head.num_labels(),
            });
        }
        Ok(LabelScorer::Direct {
            attributor: self,
            head,
            label,
        })
    }
}

/// One line of an attribution report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionRecord {
    pub word: String,
    pub class: String,
    pub value: String,
    /// Positions in the encoded sequence (0 is the start symbol).
    pub index_set: IndexSet,
    pub beta_score: f64,
    pub gamma_score: f64,
    /// Output-layer bias; `beta_score + gamma_score + bias == logit`.
    pub bias: f64,
    pub logit: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_case() {
        let l = linearize_activation(&[2.0, -3.0, 0.5], relu).unwrap();
        assert_eq!(l, vec![1.0, -1.25, 0.25]);
        assert_eq!(decompose_relu(2.0, -3.0, 0.5), (1.0, -1.0));
    }

    #[test]
    fn all_negative_gives_zero() {
        assert_eq!(decompose_relu(-1.0, -2.0, -3.0), (0.0, 0.0));
    }

    #[test]
    fn nonnegative_components_pass_through() {
        let l = linearize_activation(&[0.5, 1.5, 0.0, 2.0], relu).unwrap();
        assert_eq!(l, vec![0.5, 1.5, 0.0, 2.0]);
    }

    #[test]
    fn zero_beta_stays_zero() {
        for (g, b) in [(1.0, -2.0), (-0.3, 0.1), (4.0, 4.0)] {
            assert_eq!(decompose_relu(0.0, g, b).0, 0.0);
        }
    }

    #[test]
    fn too_many_components() {
        assert!(matches!(
            linearize_activation(&[0.0; 7], relu),
            Err(CdError::TooManyComponents(7))
        ));
    }

    #[test]
    fn maxpool_first_tie() {
        let (b, g, t) = decompose_maxpool(&[1.0, 2.0, 3.0], &[0.0, -1.0, -2.1], &[0.2, 0.9, 0.9]).unwrap();
        assert_eq!((b, g, t), (2.0, -1.0, 1));
        assert_eq!(decompose_maxpool(&[0.4], &[0.1], &[0.5]), Some((0.4, 0.1, 0)));
        assert_eq!(decompose_maxpool(&[], &[], &[]), None);
    }

    #[test]
    fn index_set_validation() {
        let ids = [2, 5, 6, 3, 0, 0];
        assert!(IndexSet::new([1, 2], &ids).is_ok());
        assert!(matches!(IndexSet::new([4], &ids), Err(CdError::PadPosition(4))));
        assert!(matches!(IndexSet::new([9], &ids), Err(CdError::OutOfBounds { .. })));
        let s = IndexSet::from_chars([1, 0, 1], &ids).unwrap();
        assert_eq!(s.positions(), &[1, 2]);
        assert_eq!(s.char_positions(2), vec![0, 1]);
    }

    #[test]
    fn conv_partition_cases() {
        // d = 2, width 3, sequence of 4 positions.
        let w = [1.0, 2.0, -1.0, 0.5, 3.0, -2.0];
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        let z_minus_b = (0.1 + 0.4) + (-0.3 + 0.2) + (1.5 - 1.2);
        let (b0, g0, _) = decompose_conv(&w, 0.7, &x, 2, &[false; 4], 0).unwrap();
        assert_eq!(b0, 0.0);
        assert!((g0 - z_minus_b).abs() < 1e-14);
        let (b1, g1, _) = decompose_conv(&w, 0.7, &x, 2, &[true; 4], 0).unwrap();
        assert_eq!(g1, 0.0);
        assert!((b1 - z_minus_b).abs() < 1e-14);
        let (b2, _, _) = decompose_conv(&w, 0.7, &x, 2, &[false, true, false, false], 1).unwrap();
        assert!((b2 - (1.0 * 0.3 + 2.0 * 0.4)).abs() < 1e-15);
        assert!(decompose_conv(&w, 0.7, &x, 2, &[false; 4], 2).is_err());
    }

    /// Subset-weighted (Shapley) form of the same average, an algebraically
    /// independent route to the permutation definition.
    fn shapley(ys: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = ys.len();
        let fact = |k: usize| (1..=k).product::<usize>() as f64;
        (0..n)
            .map(|k| {
                let mut total = 0.0;
                for mask in 0u32..(1 << n) {
                    if mask & (1 << k) != 0 {
                        continue;
                    }
                    let size = mask.count_ones() as usize;
                    let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ys[i]).sum();
                    total += fact(size) * fact(n - size - 1) / fact(n) * (f(s + ys[k]) - f(s));
                }
                total
            })
            .collect()
    }

    proptest! {
        #[test]
        fn sums_to_activation_change(ys in prop::collection::vec(-5.0f64..5.0, 1..=6)) {
            let total: f64 = ys.iter().sum();
            for f in [relu as fn(f64) -> f64, f64::tanh, crate::models::sigmoid] {
                let l = linearize_activation(&ys, f).unwrap();
                prop_assert!((l.iter().sum::<f64>() - (f(total) - f(0.0))).abs() < 1e-12);
            }
        }

        #[test]
        fn matches_subset_form(ys in prop::collection::vec(-5.0f64..5.0, 1..=5)) {
            let l = linearize_activation(&ys, f64::tanh).unwrap();
            for (a, b) in l.iter().zip(shapley(&ys, f64::tanh)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn symmetric_under_reordering(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            let l = linearize_activation(&[a, b, c], relu).unwrap();
            let r = linearize_activation(&[c, a, b], relu).unwrap();
            prop_assert!((l[0] - r[1]).abs() < 1e-12);
            prop_assert!((l[1] - r[2]).abs() < 1e-12);
            prop_assert!((l[2] - r[0]).abs() < 1e-12);
        }
    }
}
