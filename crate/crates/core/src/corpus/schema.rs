use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result, WordSample};

/// Label used when a feature class does not apply to a word.
pub const NA_LABEL: &str = "NA";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureClass {
    pub name: String,
    /// Ordered labels; index 0 is always [`NA_LABEL`].
    pub labels: Vec<String>,
}

impl FeatureClass {
    pub fn new(name: &str, values: &[&str]) -> Self {
        let mut labels = vec![NA_LABEL.to_string()];
        labels.extend(values.iter().map(|v| v.to_string()));
        FeatureClass {
            name: name.to_string(),
            labels,
        }
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }
}

/// Ordered feature classes of one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub language: String,
    pub classes: Vec<FeatureClass>,
}

impl FeatureSchema {
    pub fn new(language: &str, classes: Vec<FeatureClass>) -> Result<Self> {
        for c in &classes {
            let mut seen = std::collections::HashSet::new();
            if c.labels.first().map(String::as_str) != Some(NA_LABEL) {
                return Err(CorpusError::Schema(format!(
                    "class {} must start with the {NA_LABEL} label",
                    c.name
                )));
            }
            for l in &c.labels {
                if !seen.insert(l) {
                    return Err(CorpusError::Schema(format!("duplicate label {l} in class {}", c.name)));
                }
            }
        }
        Ok(FeatureSchema {
            language: language.to_string(),
            classes,
        })
    }

    /// Built-in class inventories for `fi`, `es` and `sv`.
    pub fn builtin(language: &str) -> Option<Self> {
        let classes = match language {
            "fi" => vec![
                FeatureClass::new("Number", &["Sing", "Plur"]),
                FeatureClass::new("PartForm", &["Past", "Pres", "Agt", "Neg"]),
                FeatureClass::new(
                    "Case",
                    &[
                        "Ela", "Ine", "Ins", "Par", "Ill", "Com", "Nom", "All", "Acc", "Ade", "Gen", "Ess", "Abl",
                        "Tra", "Abe",
                    ],
                ),
                FeatureClass::new("Person", &["1", "2", "3"]),
                FeatureClass::new(
                    "Derivation",
                    &[
                        "Ja", "Minen", "Sti", "Vs", "Tar", "Llinen", "Inen", "U", "Ttaa", "Ttain", "Lainen", "Ton",
                    ],
                ),
                FeatureClass::new("Person[psor]", &["1", "2", "3"]),
                FeatureClass::new("VerbForm", &["Inf", "Part", "Fin"]),
                FeatureClass::new("Mood", &["Imp", "Cnd", "Pot", "Ind"]),
                FeatureClass::new("Tense", &["Past", "Pres"]),
                FeatureClass::new(
                    "Clitic",
                    &[
                        "Pa,S", "Han", "Ko", "Pa", "Han,Pa", "Han,Ko", "Ko,S", "S", "Kin", "Kaan", "Ka",
                    ],
                ),
                FeatureClass::new("Degree", &["Pos", "Cmp", "Sup"]),
                FeatureClass::new("Voice", &["Pass", "Act"]),
            ],
            "es" => vec![
                FeatureClass::new("Person", &["1", "2", "3"]),
                FeatureClass::new("Mood", &["Imp", "Ind", "Sub", "Cnd"]),
                FeatureClass::new("Tense", &["Fut", "Imp", "Pres", "Past"]),
                FeatureClass::new("Gender", &["Fem", "Masc"]),
                FeatureClass::new("VerbForm", &["Inf", "Ger", "Part", "Fin"]),
                FeatureClass::new("Number", &["Sing", "Plur"]),
            ],
            "sv" => vec![
                FeatureClass::new("Gender", &["Neut", "Masc", "Fem", "Com"]),
                FeatureClass::new("Degree", &["Sup", "Cmp", "Pos"]),
                FeatureClass::new("Number", &["Sing", "Plur"]),
                FeatureClass::new("Case", &["Gen", "Nom", "Acc"]),
                FeatureClass::new("Poss", &["Yes"]),
                FeatureClass::new("Voice", &["Act", "Pass"]),
                FeatureClass::new("Tense", &["Pres", "Past"]),
                FeatureClass::new("Definite", &["Ind", "Def"]),
                FeatureClass::new("VerbForm", &["Sup", "Part", "Inf", "Fin", "Stem"]),
            ],
            _ => return None,
        };
        Some(FeatureSchema {
            language: language.to_string(),
            classes,
        })
    }

    /// Schema covering every class/value observed in `features`, classes and
    /// values sorted lexicographically.
    pub fn infer<'a>(language: &str, features: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut seen: BTreeMap<&str, std::collections::BTreeSet<&str>> = BTreeMap::new();
        for (k, v) in features {
            let entry = seen.entry(k).or_default();
            if v != NA_LABEL {
                entry.insert(v);
            }
        }
        let classes = seen
            .into_iter()
            .map(|(k, vs)| FeatureClass::new(k, &vs.into_iter().collect::<Vec<_>>()))
            .collect();
        FeatureSchema {
            language: language.to_string(),
            classes,
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn class(&self, name: &str) -> Option<&FeatureClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Label ids in class order.
    pub fn encode_labels(&self, sample: &WordSample) -> Result<Vec<usize>> {
        self.classes
            .iter()
            .map(|c| {
                let label = sample.features.get(&c.name).map(String::as_str).unwrap_or(NA_LABEL);
                c.label_index(label).ok_or_else(|| CorpusError::UnknownValue {
                    class: c.name.clone(),
                    value: label.to_string(),
                })
            })
            .collect()
    }

    /// Restriction to one class, keeping its label order.
    pub fn restrict(&self, class: &str) -> Option<FeatureSchema> {
        self.class(class).map(|c| FeatureSchema {
            language: self.language.clone(),
            classes: vec![c.clone()],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_class_counts() {
        assert_eq!(FeatureSchema::builtin("fi").unwrap().len(), 12);
        assert_eq!(FeatureSchema::builtin("es").unwrap().len(), 6);
        assert_eq!(FeatureSchema::builtin("sv").unwrap().len(), 9);
        assert!(FeatureSchema::builtin("xx").is_none());
    }

    #[test]
    fn builtin_labels_are_unique_and_start_with_na() {
        for lang in ["fi", "es", "sv"] {
            let s = FeatureSchema::builtin(lang).unwrap();
            let rebuilt = FeatureSchema::new(lang, s.classes.clone()).unwrap();
            assert_eq!(rebuilt, s);
        }
    }

    #[test]
    fn inferred_schema_is_sorted() {
        let s = FeatureSchema::infer(
            "toy",
            [
                ("Number", "Plur"),
                ("Gender", "Fem"),
                ("Number", "Sing"),
                ("Number", "Plur"),
            ],
        );
        assert_eq!(s.classes[0].name, "Gender");
        assert_eq!(s.classes[1].labels, vec!["NA", "Plur", "Sing"]);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let bad = FeatureClass {
            name: "X".into(),
            labels: vec!["NA".into(), "a".into(), "a".into()],
        };
        assert!(FeatureSchema::new("x", vec![bad]).is_err());
    }
}
