use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::WordSample;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const START_ID: usize = 2;
pub const END_ID: usize = 3;
const RESERVED: usize = 4;

pub const START_SYMBOL: char = '^';
pub const END_SYMBOL: char = '$';

/// Character inventory with four reserved ids (pad, unknown, start, end).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<char>", into = "Vec<char>")]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl From<Vec<char>> for CharVocab {
    fn from(chars: Vec<char>) -> Self {
        CharVocab::from_chars(chars)
    }
}

impl From<CharVocab> for Vec<char> {
    fn from(v: CharVocab) -> Self {
        v.chars
    }
}

impl CharVocab {
    /// Vocabulary over the sorted, de-duplicated characters of `chars`.
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let chars: Vec<char> = chars.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let index = chars.iter().enumerate().map(|(i, &c)| (c, i + RESERVED)).collect();
        CharVocab { chars, index }
    }

    pub fn build<'a>(samples: impl IntoIterator<Item = &'a WordSample>) -> Self {
        Self::from_chars(samples.into_iter().flat_map(|s| s.surface.chars()))
    }

    /// Total ids including the reserved ones.
    pub fn len(&self) -> usize {
        self.chars.len() + RESERVED
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, c: char) -> bool {
        self.index.contains_key(&c)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Display form of an id; reserved ids render as `^`, `$`, `<pad>`, `<unk>`.
    pub fn render(&self, id: usize) -> String {
        match id {
            PAD_ID => "<pad>".into(),
            UNK_ID => "<unk>".into(),
            START_ID => START_SYMBOL.to_string(),
            END_ID => END_SYMBOL.to_string(),
            i => self
                .chars
                .get(i - RESERVED)
                .map(|c| c.to_string())
                .unwrap_or_else(|| "<unk>".into()),
        }
    }

    /// Surface characters of an id sequence with reserved ids stripped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i >= RESERVED)
            .filter_map(|&i| self.chars.get(i - RESERVED))
            .collect()
    }
}

/// `[^] + chars + [$]`, right-padded with [`PAD_ID`] to `min_len`.
pub fn encode_word(surface: &str, vocab: &CharVocab, min_len: usize) -> Vec<usize> {
    let mut ids = Vec::with_capacity(surface.len() + 2);
    ids.push(START_ID);
    ids.extend(surface.chars().map(|c| vocab.id(c)));
    ids.push(END_ID);
    while ids.len() < min_len {
        ids.push(PAD_ID);
    }
    ids
}

/// Characters occurring exactly once across `samples`.
pub fn singleton_chars<'a>(samples: impl IntoIterator<Item = &'a WordSample>) -> BTreeSet<char> {
    let mut counts: BTreeMap<char, usize> = BTreeMap::new();
    for s in samples {
        for c in s.surface.chars() {
            *counts.entry(c).or_default() += 1;
        }
    }
    counts.into_iter().filter(|&(_, n)| n == 1).map(|(c, _)| c).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> CharVocab {
        CharVocab::from_chars("abcdefghijklmnopqrstuvwxyzáéíóúñ".chars())
    }

    #[test]
    fn encodes_with_boundaries() {
        let v = vocab();
        assert_eq!(encode_word("ab", &v, 0), vec![START_ID, v.id('a'), v.id('b'), END_ID]);
    }

    #[test]
    fn pads_to_min_len() {
        let v = vocab();
        assert_eq!(
            encode_word("a", &v, 6),
            vec![START_ID, v.id('a'), END_ID, PAD_ID, PAD_ID, PAD_ID]
        );
    }

    #[test]
    fn unseen_character_is_unknown() {
        let v = vocab();
        assert_eq!(encode_word("aß", &v, 0)[2], UNK_ID);
    }

    #[test]
    fn reserved_render_and_distinct() {
        let v = vocab();
        let ids = [PAD_ID, UNK_ID, START_ID, END_ID];
        assert_eq!(ids.iter().collect::<BTreeSet<_>>().len(), 4);
        assert_eq!(v.render(START_ID), "^");
        assert_eq!(v.render(END_ID), "$");
        assert_eq!(v.render(v.id('ñ')), "ñ");
    }

    #[test]
    fn singletons() {
        let w = |s: &str| WordSample::new(s, Default::default());
        let samples = [w("aab"), w("ac")];
        assert_eq!(singleton_chars(&samples), ['b', 'c'].into_iter().collect());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(s in "[a-zñó]{1,12}", pad in 0usize..20) {
            let v = vocab();
            let ids = encode_word(&s, &v, pad);
            prop_assert!(ids.len() >= pad.max(s.chars().count() + 2));
            prop_assert_eq!(v.decode(&ids), s);
        }
    }
}
