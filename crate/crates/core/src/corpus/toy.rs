use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{CorpusError, FeatureClass, FeatureSchema, Result, SegmentAnnotation, Splits, WordSample, NA_LABEL};
use crate::tensor::Rng;

/// One feature contributed by a suffix rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyFeature {
    /// `Class=Value`.
    pub feature: String,
    /// Substring of the suffix realising the feature; defaults to the whole
    /// suffix. Empty realisations produce no annotation.
    #[serde(default)]
    pub segment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuffixRule {
    pub suffix: String,
    #[serde(default = "one")]
    pub weight: f64,
    pub features: Vec<ToyFeature>,
}

fn one() -> f64 {
    1.0
}

/// Stem alphabet plus weighted suffix rules; loaded from TOML.
///
/// ```toml
/// alphabet = "bcdfgklmnprtv"
/// stem_min = 2
/// stem_max = 6
///
/// [[rules]]
/// suffix = "s"
/// features = [{ feature = "Number=Plur" }]
///
/// [[rules]]
/// suffix = ""
/// features = [{ feature = "Number=Sing" }]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ruleset {
    pub alphabet: String,
    pub stem_min: usize,
    pub stem_max: usize,
    pub rules: Vec<SuffixRule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpus {
    pub schema: FeatureSchema,
    pub samples: Vec<WordSample>,
    /// Ground-truth segments, in sample order.
    pub annotations: Vec<SegmentAnnotation>,
}

fn split_feature(f: &str) -> Result<(&str, &str)> {
    f.split_once('=')
        .filter(|(k, v)| !k.is_empty() && !v.is_empty())
        .ok_or_else(|| CorpusError::Config(format!("feature {f:?} is not Class=Value")))
}

impl Ruleset {
    pub fn from_toml(text: &str) -> Result<Self> {
        let r: Ruleset = toml::from_str(text).map_err(|e| CorpusError::Config(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("ruleset serialises")
    }

    /// Plural marked by a final `s`; singular unmarked.
    pub fn plural_suffix() -> Self {
        Ruleset {
            alphabet: "bcdfgklmnprtvaeiou".into(),
            stem_min: 3,
            stem_max: 7,
            rules: vec![
                SuffixRule {
                    suffix: "s".into(),
                    weight: 1.0,
                    features: vec![ToyFeature {
                        feature: "Number=Plur".into(),
                        segment: None,
                    }],
                },
                SuffixRule {
                    suffix: String::new(),
                    weight: 1.0,
                    features: vec![ToyFeature {
                        feature: "Number=Sing".into(),
                        segment: None,
                    }],
                },
            ],
        }
    }

    /// Singular marked by a final `o` that also ends a minority of
    /// unmarked plurals, so the suffix is informative but not decisive.
    pub fn ambiguous_number() -> Self {
        let rule = |suffix: &str, weight: f64, feature: &str, segment: &str| SuffixRule {
            suffix: suffix.into(),
            weight,
            features: vec![ToyFeature {
                feature: feature.into(),
                segment: Some(segment.into()),
            }],
        };
        Ruleset {
            alphabet: "bcdfgklmnprtvaeiu".into(),
            stem_min: 3,
            stem_max: 7,
            rules: vec![
                rule("o", 3.0, "Number=Sing", "o"),
                rule("os", 3.0, "Number=Plur", "s"),
                rule("o", 1.0, "Number=Plur", "o"),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(CorpusError::Empty("ruleset has no rules"));
        }
        if self.alphabet.is_empty() {
            return Err(CorpusError::Config("empty alphabet".into()));
        }
        if self.stem_min == 0 || self.stem_min > self.stem_max {
            return Err(CorpusError::Config(format!(
                "stem lengths {}..={} invalid",
                self.stem_min, self.stem_max
            )));
        }
        for r in &self.rules {
            if !(r.weight > 0.0 && r.weight.is_finite()) {
                return Err(CorpusError::Config(format!(
                    "rule {:?} has weight {}",
                    r.suffix, r.weight
                )));
            }
            for f in &r.features {
                split_feature(&f.feature)?;
                if let Some(seg) = &f.segment {
                    if !r.suffix.contains(seg.as_str()) {
                        return Err(CorpusError::Config(format!(
                            "segment {seg:?} not in suffix {:?}",
                            r.suffix
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Classes and values in order of first appearance.
    pub fn schema(&self) -> FeatureSchema {
        let mut classes: Vec<(String, Vec<String>)> = Vec::new();
        for r in &self.rules {
            for f in &r.features {
                let (k, v) = split_feature(&f.feature).expect("validated");
                match classes.iter_mut().find(|(n, _)| n == k) {
                    Some((_, vals)) => {
                        if !vals.iter().any(|x| x == v) {
                            vals.push(v.to_string());
                        }
                    }
                    None => classes.push((k.to_string(), vec![v.to_string()])),
                }
            }
        }
        let classes = classes
            .into_iter()
            .map(|(k, vs)| {
                let refs: Vec<&str> = vs.iter().map(String::as_str).collect();
                FeatureClass::new(&k, &refs)
            })
            .collect();
        FeatureSchema {
            language: "toy".into(),
            classes,
        }
    }

    fn draw_rule(&self, rng: &mut Rng) -> &SuffixRule {
        let total: f64 = self.rules.iter().map(|r| r.weight).sum();
        let mut u = rng.uniform() * total;
        for r in &self.rules {
            if u < r.weight {
                return r;
            }
            u -= r.weight;
        }
        self.rules.last().expect("non-empty")
    }
}

/// Random stems plus rule-drawn suffixes. Surfaces are unique; generation
/// stops early if the stem space is exhausted.
pub fn generate_toy_corpus(ruleset: &Ruleset, n_words: usize, rng: &mut Rng) -> Result<ToyCorpus> {
    ruleset.validate()?;
    let schema = ruleset.schema();
    let alphabet: Vec<char> = ruleset.alphabet.chars().collect();
    let mut seen = HashSet::new();
    let mut samples = Vec::with_capacity(n_words);
    let mut annotations = Vec::new();
    let max_attempts = 50 * n_words.max(1);
    let mut attempts = 0;
    while samples.len() < n_words && attempts < max_attempts {
        attempts += 1;
        let len = ruleset.stem_min + rng.below(ruleset.stem_max - ruleset.stem_min + 1);
        let stem: String = (0..len).map(|_| alphabet[rng.below(alphabet.len())]).collect();
        let rule = ruleset.draw_rule(rng);
        let surface = format!("{stem}{}", rule.suffix);
        if !seen.insert(surface.clone()) {
            continue;
        }
        let mut features: BTreeMap<String, String> = schema
            .classes
            .iter()
            .map(|c| (c.name.clone(), NA_LABEL.to_string()))
            .collect();
        for f in &rule.features {
            let (k, v) = split_feature(&f.feature)?;
            features.insert(k.to_string(), v.to_string());
            let seg = f.segment.as_deref().unwrap_or(&rule.suffix);
            if seg.is_empty() {
                continue;
            }
            let byte_off = rule.suffix.find(seg).expect("validated");
            let start = len + rule.suffix[..byte_off].chars().count();
            let indices = (start..start + seg.chars().count()).collect();
            annotations.push(SegmentAnnotation::new(&surface, k, v, indices));
        }
        samples.push(WordSample::new(surface, features));
    }
    if samples.len() < n_words {
        log::warn!("toy corpus exhausted after {} unique words", samples.len());
    }
    Ok(ToyCorpus {
        schema,
        samples,
        annotations,
    })
}

impl ToyCorpus {
    /// Contiguous train/valid/test split by fractions of the sample list.
    pub fn split(&self, valid_frac: f64, test_frac: f64) -> Splits {
        let n = self.samples.len();
        let n_valid = (n as f64 * valid_frac).round() as usize;
        let n_test = (n as f64 * test_frac).round() as usize;
        let n_train = n.saturating_sub(n_valid + n_test);
        Splits {
            train: self.samples[..n_train].to_vec(),
            valid: self.samples[n_train..n_train + n_valid].to_vec(),
            test: self.samples[n_train + n_valid..].to_vec(),
        }
    }

    /// Annotations whose word is in `words`.
    pub fn annotations_for(&self, words: &[WordSample]) -> Vec<SegmentAnnotation> {
        let set: HashSet<&str> = words.iter().map(|w| w.surface.as_str()).collect();
        self.annotations
            .iter()
            .filter(|a| set.contains(a.surface.as_str()))
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffix_annotation_by_construction() {
        let corpus = generate_toy_corpus(&Ruleset::plural_suffix(), 200, &mut Rng::seeded(4)).unwrap();
        let plural: Vec<_> = corpus.samples.iter().filter(|s| s.label("Number") == "Plur").collect();
        assert!(!plural.is_empty());
        assert_eq!(plural.len(), corpus.annotations.len());
        for a in &corpus.annotations {
            let n = a.surface.chars().count();
            assert_eq!(a.indices, vec![n - 1]);
            assert!(a.surface.ends_with('s'));
            assert_eq!((a.class.as_str(), a.value.as_str()), ("Number", "Plur"));
        }
    }

    #[test]
    fn label_distribution_matches_weights() {
        let n = 1000;
        let corpus = generate_toy_corpus(&Ruleset::plural_suffix(), n, &mut Rng::seeded(8)).unwrap();
        let plur = corpus.samples.iter().filter(|s| s.label("Number") == "Plur").count() as f64;
        let (p, nf) = (0.5, n as f64);
        let sigma = (nf * p * (1.0 - p)).sqrt();
        assert!((plur - nf * p).abs() <= 3.0 * sigma, "{plur}");
    }

    #[test]
    fn same_seed_same_corpus() {
        let r = Ruleset::ambiguous_number();
        let a = generate_toy_corpus(&r, 300, &mut Rng::seeded(5)).unwrap();
        let b = generate_toy_corpus(&r, 300, &mut Rng::seeded(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_ruleset_rejected() {
        let mut r = Ruleset::plural_suffix();
        r.rules.clear();
        assert!(matches!(
            generate_toy_corpus(&r, 10, &mut Rng::seeded(0)),
            Err(CorpusError::Empty(_))
        ));
    }

    #[test]
    fn toml_round_trip() {
        let r = Ruleset::ambiguous_number();
        assert_eq!(Ruleset::from_toml(&r.to_toml()).unwrap(), r);
        let doc = "alphabet = \"xyz\"\nstem_min = 1\nstem_max = 2\n[[rules]]\nsuffix = \"as\"\n\
                   features = [{ feature = \"Gender=Fem\", segment = \"a\" }, { feature = \"Number=Plur\", segment = \"s\" }]\n";
        let r = Ruleset::from_toml(doc).unwrap();
        let c = generate_toy_corpus(&r, 3, &mut Rng::seeded(1)).unwrap();
        let s = &c.samples[0];
        let n = s.char_len();
        assert_eq!(c.annotations[0].indices, vec![n - 2]);
        assert_eq!(c.annotations[1].indices, vec![n - 1]);
        assert_eq!(c.schema.len(), 2);
    }
}
