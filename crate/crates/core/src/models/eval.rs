use serde::{Deserialize, Serialize};

use super::{argmax, Model, ModelError, Result};
use crate::corpus::{FeatureSchema, WordSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// `(class, accuracy)` in schema order.
    pub per_class: Vec<(String, f64)>,
    pub average: f64,
    pub words: usize,
}

impl AccuracyReport {
    pub fn class(&self, name: &str) -> Option<f64> {
        self.per_class.iter().find(|(c, _)| c == name).map(|&(_, a)| a)
    }

    fn from_counts(schema: &FeatureSchema, correct: &[usize], words: usize) -> Self {
        let per_class: Vec<(String, f64)> = schema
            .classes
            .iter()
            .zip(correct)
            .map(|(c, &k)| (c.name.clone(), if words == 0 { 0.0 } else { k as f64 / words as f64 }))
            .collect();
        let average = per_class.iter().map(|(_, a)| a).sum::<f64>() / per_class.len().max(1) as f64;
        AccuracyReport {
            per_class,
            average,
            words,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: AccuracyReport,
    /// Most frequent training label per class, applied to every test word.
    pub majority: Option<AccuracyReport>,
}

/// Per-class and average accuracy of `model` on `words`.
pub fn evaluate_accuracy(model: &Model, words: &[WordSample], schema: &FeatureSchema) -> Result<AccuracyReport> {
    if schema != &model.schema {
        return Err(ModelError::SchemaMismatch(format!(
            "model was trained on schema {:?} with {} classes, evaluation uses {:?} with {}",
            model.schema.language,
            model.schema.len(),
            schema.language,
            schema.len()
        )));
    }
    let heads = model.heads();
    let mut correct = vec![0usize; schema.len()];
    for w in words {
        let gold = schema.encode_labels(w)?;
        let repr = model.represent(&model.encode(&w.surface))?;
        for (k, h) in heads.heads.iter().enumerate() {
            if argmax(&h.logits(&repr)?) == gold[k] {
                correct[k] += 1;
            }
        }
    }
    Ok(AccuracyReport::from_counts(schema, &correct, words.len()))
}

/// Accuracy of always predicting the most frequent training label
/// (lowest label index on ties).
pub fn majority_baseline(schema: &FeatureSchema, train: &[WordSample], test: &[WordSample]) -> Result<AccuracyReport> {
    let mut counts: Vec<Vec<usize>> = schema.classes.iter().map(|c| vec![0; c.num_labels()]).collect();
    for w in train {
        for (k, y) in schema.encode_labels(w)?.into_iter().enumerate() {
            counts[k][y] += 1;
        }
    }
    let majority: Vec<usize> = counts
        .iter()
        .map(|c| {
            let as_f: Vec<f64> = c.iter().map(|&v| v as f64).collect();
            argmax(&as_f)
        })
        .collect();
    let mut correct = vec![0usize; schema.len()];
    for w in test {
        for (k, y) in schema.encode_labels(w)?.into_iter().enumerate() {
            if y == majority[k] {
                correct[k] += 1;
            }
        }
    }
    Ok(AccuracyReport::from_counts(schema, &correct, test.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CharVocab, FeatureClass};
    use crate::models::EncoderConfig;
    use crate::tensor::Rng;
    use std::collections::BTreeMap;

    fn schema() -> FeatureSchema {
        FeatureSchema::new("xx", vec![FeatureClass::new("Number", &["Sing", "Plur"])]).unwrap()
    }

    fn word(s: &str, number: &str) -> WordSample {
        let mut f = BTreeMap::new();
        f.insert("Number".to_string(), number.to_string());
        WordSample::new(s, f)
    }

    #[test]
    fn majority_counts() {
        let train = vec![word("a", "Sing"), word("b", "Sing"), word("c", "Plur")];
        let test = vec![word("d", "Sing"), word("e", "Plur"), word("f", "NA"), word("g", "Sing")];
        let r = majority_baseline(&schema(), &train, &test).unwrap();
        assert_eq!(r.per_class, vec![("Number".to_string(), 0.5)]);
        assert_eq!(r.average, 0.5);
    }

    #[test]
    fn model_predicting_gold_scores_one() {
        // Set the head bias so every word is predicted Plur.
        let vocab = CharVocab::from_chars("ab".chars());
        let cfg = EncoderConfig::Cnn {
            embed_dim: 2,
            banks: vec![(1, 2)],
        };
        let mut m = Model::init(cfg, schema(), vocab, &mut Rng::seeded(1)).unwrap();
        let w = m.params.find("head.Number.weight").unwrap();
        m.params.get_mut(w).data_mut().fill(0.0);
        let b = m.params.find("head.Number.bias").unwrap();
        m.params.get_mut(b).data_mut().copy_from_slice(&[0.0, 0.0, 1.0]);
        let words = vec![word("ab", "Plur"), word("ba", "Plur")];
        let r = evaluate_accuracy(&m, &words, &schema()).unwrap();
        assert_eq!(r.average, 1.0);
        assert_eq!(r.class("Number"), Some(1.0));
    }

    #[test]
    fn schema_mismatch_rejected() {
        let vocab = CharVocab::from_chars("ab".chars());
        let m = Model::init(EncoderConfig::bilstm_default(), schema(), vocab, &mut Rng::seeded(1)).unwrap();
        let other = FeatureSchema::builtin("es").unwrap();
        assert!(matches!(
            evaluate_accuracy(&m, &[], &other),
            Err(ModelError::SchemaMismatch(_))
        ));
    }
}
