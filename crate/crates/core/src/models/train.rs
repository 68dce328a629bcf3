use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{EncoderConfig, Model, ModelError, Result};
use crate::corpus::{encode_word, singleton_chars, CharVocab, FeatureSchema, WordSample, UNK_ID};
use crate::tensor::{adam_step, AdamConfig, AdamState, Graph, Rng, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Probability of replacing a training-singleton character with the
    /// unknown id.
    pub unk_replace_prob: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            batch_size: 20,
            max_epochs: 50,
            patience: 5,
            seed: 1,
            unk_replace_prob: 0.1,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(ModelError::Config(format!("invalid training config {self:?}")));
        }
        if !(0.0..=1.0).contains(&self.unk_replace_prob) {
            return Err(ModelError::Config("unk_replace_prob outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean summed-over-heads loss per training word.
    pub train_loss: f64,
    /// Mean per-head validation accuracy.
    pub valid_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_accuracy: f64,
}

struct Encoded {
    ids: Vec<usize>,
    gold: Vec<usize>,
    /// Positions in `ids` holding training-singleton characters.
    rare: Vec<usize>,
}

fn encode_all(
    samples: &[WordSample],
    vocab: &CharVocab,
    schema: &FeatureSchema,
    min_len: usize,
    singletons: &BTreeSet<char>,
) -> Result<Vec<Encoded>> {
    samples
        .iter()
        .map(|s| {
            let ids = encode_word(&s.surface, vocab, min_len);
            let rare = s
                .surface
                .chars()
                .enumerate()
                .filter(|(_, c)| singletons.contains(c))
                .map(|(i, _)| i + 1)
                .collect();
            Ok(Encoded {
                ids,
                gold: schema.encode_labels(s)?,
                rare,
            })
        })
        .collect()
}

/// Mean per-head accuracy of `model` on pre-encoded words.
fn mean_accuracy(model: &Model, data: &[Encoded]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let heads = model.heads();
    let mut correct = vec![0usize; heads.heads.len()];
    for e in data {
        let repr = model.represent(&e.ids)?;
        for (k, h) in heads.heads.iter().enumerate() {
            if super::argmax(&h.logits(&repr)?) == e.gold[k] {
                correct[k] += 1;
            }
        }
    }
    let n = data.len() as f64;
    Ok(correct.iter().map(|&c| c as f64 / n).sum::<f64>() / correct.len() as f64)
}

/// Joint minibatch Adam training with early stopping on mean validation
/// accuracy. Returns the parameters of the best epoch.
pub fn train(
    encoder: EncoderConfig,
    schema: &FeatureSchema,
    train_set: &[WordSample],
    valid_set: &[WordSample],
    cfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(ModelError::Config(
            "training and validation sets must be non-empty".into(),
        ));
    }
    let mut rng = Rng::seeded(cfg.seed);
    let vocab = CharVocab::build(train_set);
    let singletons = singleton_chars(train_set);
    let min_len = encoder.min_len();
    let mut model = Model::init(encoder, schema.clone(), vocab, &mut rng)?;
    let train_data = encode_all(train_set, &model.vocab, schema, min_len, &singletons)?;
    let valid_data = encode_all(valid_set, &model.vocab, schema, min_len, &BTreeSet::new())?;

    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(&model.params);
    let mut history = TrainHistory::default();
    let mut best_params = model.params.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_data.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc: Vec<Tensor> = model
                .params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect();
            for &i in batch {
                let e = &train_data[i];
                let mut ids = e.ids.clone();
                for &p in &e.rare {
                    if rng.bernoulli(cfg.unk_replace_prob) {
                        ids[p] = UNK_ID;
                    }
                }
                let mut g = Graph::new(&model.params);
                let loss = model
                    .loss_graph(&mut g, &ids, &e.gold)
                    .map_err(|err| ModelError::Divergence {
                        epoch,
                        batch: batch_no,
                        detail: err.to_string(),
                    })?;
                epoch_loss += g.value(loss).data()[0];
                let grads = g.backward(loss).map_err(|err| ModelError::Divergence {
                    epoch,
                    batch: batch_no,
                    detail: err.to_string(),
                })?;
                grads.accumulate_into(&mut acc);
            }
            let scale = 1.0 / batch.len() as f64;
            for t in &mut acc {
                t.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            adam_step(&mut model.params, &acc, &mut state, &adam)?;
        }
        let train_loss = epoch_loss / train_data.len() as f64;
        if !train_loss.is_finite() {
            return Err(ModelError::Divergence {
                epoch,
                batch: 0,
                detail: format!("epoch loss {train_loss}"),
            });
        }
        let valid_accuracy = mean_accuracy(&model, &valid_data)?;
        log::info!("epoch {epoch}: loss {train_loss:.4}, valid acc {valid_accuracy:.4}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            valid_accuracy,
        });
        if valid_accuracy > best_acc {
            best_acc = valid_accuracy;
            best_params = model.params.clone();
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    model.params = best_params;
    history.best_valid_accuracy = best_acc;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_toy_corpus, Ruleset};

    fn small_cnn() -> EncoderConfig {
        EncoderConfig::Cnn {
            embed_dim: 8,
            banks: vec![(1, 4), (2, 4), (3, 4)],
        }
    }

    #[test]
    fn zero_learning_rate_keeps_initial_weights() {
        let corpus = generate_toy_corpus(&Ruleset::plural_suffix(), 60, &mut Rng::seeded(1)).unwrap();
        let splits = corpus.split(0.2, 0.0);
        let cfg = TrainConfig {
            lr: 0.0,
            max_epochs: 1,
            ..TrainConfig::default()
        };
        let (model, _) = train(small_cnn(), &corpus.schema, &splits.train, &splits.valid, &cfg).unwrap();
        // Same seed, same init path.
        let mut rng = Rng::seeded(cfg.seed);
        let fresh = Model::init(
            small_cnn(),
            corpus.schema.clone(),
            CharVocab::build(&splits.train),
            &mut rng,
        )
        .unwrap();
        assert_eq!(model.params, fresh.params);
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = generate_toy_corpus(&Ruleset::plural_suffix(), 80, &mut Rng::seeded(2)).unwrap();
        let splits = corpus.split(0.25, 0.0);
        let cfg = TrainConfig {
            max_epochs: 3,
            ..TrainConfig::default()
        };
        let (m1, h1) = train(small_cnn(), &corpus.schema, &splits.train, &splits.valid, &cfg).unwrap();
        let (m2, h2) = train(small_cnn(), &corpus.schema, &splits.train, &splits.valid, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1.params, m2.params);
    }

    #[test]
    fn empty_validation_rejected() {
        let corpus = generate_toy_corpus(&Ruleset::plural_suffix(), 10, &mut Rng::seeded(2)).unwrap();
        let err = train(
            small_cnn(),
            &corpus.schema,
            &corpus.samples,
            &[],
            &TrainConfig::default(),
        );
        assert!(matches!(err, Err(ModelError::Config(_))));
    }
}
