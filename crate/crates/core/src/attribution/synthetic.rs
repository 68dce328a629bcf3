use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{resolve_label, AttributionError, Result};
use crate::cd::WordAttributor;
use crate::corpus::{
    binary_subset, inject_synthetic, FeatureClass, FeatureSchema, InjectedSample, Splits, SyntheticConfig, WordSample,
};
use crate::models::{argmax, train, EncoderConfig, ModelError, TrainConfig};
use crate::tensor::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSetup {
    /// Injection probabilities, evaluated in order.
    pub levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    /// Symbol and binary labels; its `p_syn` is overridden per level.
    pub injection: SyntheticConfig,
}

impl Default for SyntheticSetup {
    fn default() -> Self {
        SyntheticSetup {
            levels: vec![1.0, 0.9, 0.8, 0.7, 0.6, 0.5],
            seeds: (1..=5).collect(),
            encoder: EncoderConfig::cnn_default(),
            train: TrainConfig::default(),
            injection: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedCounts {
    pub seed: u64,
    /// Differs from `seed` when the first run diverged and was retried.
    pub used_seed: u64,
    /// Positive test words.
    pub words: usize,
    pub injected: usize,
    pub predicted: usize,
    pub synthetic_top: usize,
    /// Positive test words with a ground-truth segment.
    pub gt_words: usize,
    pub gt_top: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub p_syn: f64,
    pub prediction_rate: f64,
    pub synthetic_rate: f64,
    pub gt_rate: f64,
    pub seeds: Vec<SeedCounts>,
    /// Seeds whose training diverged twice.
    pub failed_seeds: Vec<(u64, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCurves {
    pub levels: Vec<LevelResult>,
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn strip(samples: Vec<InjectedSample>) -> Vec<WordSample> {
    samples.into_iter().map(|s| s.sample).collect()
}

/// Trains a fresh encoder per level and seed on a corpus where the synthetic
/// symbol is prepended to positive words with probability `p_syn` and to
/// negative words with `1 − p_syn`, then checks on positive test words
/// whether the single highest-scoring character is the symbol or part of
/// the ground-truth segment. `ground_truth` maps an uninjected surface form
/// to its segment positions.
pub fn synthetic_experiment(
    splits: &Splits,
    ground_truth: &BTreeMap<String, Vec<usize>>,
    setup: &SyntheticSetup,
) -> Result<SyntheticCurves> {
    let inj = &setup.injection;
    if setup.levels.iter().any(|p| !(0.0..=1.0).contains(p)) || setup.seeds.is_empty() {
        return Err(AttributionError::Config(
            "levels must lie in [0, 1] and seeds be non-empty".into(),
        ));
    }
    let schema = FeatureSchema::new(
        "synthetic",
        vec![FeatureClass::new(
            &inj.class,
            &[inj.positive.as_str(), inj.negative.as_str()],
        )],
    )?;
    let base = Splits {
        train: binary_subset(&splits.train, inj),
        valid: binary_subset(&splits.valid, inj),
        test: binary_subset(&splits.test, inj),
    };
    let mut levels = Vec::with_capacity(setup.levels.len());
    for &p_syn in &setup.levels {
        let cfg = SyntheticConfig { p_syn, ..inj.clone() };
        let mut seeds = Vec::new();
        let mut failed_seeds = Vec::new();
        for &seed in &setup.seeds {
            let mut rng = Rng::seeded(seed);
            let train_set = strip(inject_synthetic(&base.train, &cfg, &mut rng)?);
            let valid_set = strip(inject_synthetic(&base.valid, &cfg, &mut rng)?);
            let test_set = inject_synthetic(&base.test, &cfg, &mut rng)?;
            let mut run = None;
            for used_seed in [seed, seed + 1] {
                let tc = TrainConfig {
                    seed: used_seed,
                    ..setup.train.clone()
                };
                match train(setup.encoder.clone(), &schema, &train_set, &valid_set, &tc) {
                    Ok((model, _)) => {
                        run = Some((model, used_seed));
                        break;
                    }
                    Err(e @ ModelError::Divergence { .. }) => {
                        log::warn!("p_syn {p_syn}, seed {used_seed}: {e}");
                        if used_seed != seed {
                            failed_seeds.push((seed, e.to_string()));
                        }
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            let Some((model, used_seed)) = run else { continue };
            let (k, j) = resolve_label(&model, &inj.class, &inj.positive)?;
            let heads = model.heads();
            let mut c = SeedCounts {
                seed,
                used_seed,
                words: 0,
                injected: 0,
                predicted: 0,
                synthetic_top: 0,
                gt_words: 0,
                gt_top: 0,
            };
            for s in test_set.iter().filter(|s| s.target) {
                c.words += 1;
                c.injected += s.injected as usize;
                let surface = &s.sample.surface;
                if argmax(&model.logits(surface)?[k]) == j {
                    c.predicted += 1;
                }
                let attributor = WordAttributor::new(&model, surface)?;
                let scorer = attributor.scorer(heads.heads[k], j)?;
                let scores = (0..surface.chars().count())
                    .map(|i| Ok(scorer.score_chars(&[i])?))
                    .collect::<Result<Vec<f64>>>()?;
                let top = argmax(&scores);
                if s.injected && top == 0 {
                    c.synthetic_top += 1;
                }
                let original = if s.injected {
                    surface.chars().skip(1).collect::<String>()
                } else {
                    surface.clone()
                };
                if let Some(gt) = ground_truth.get(&original) {
                    c.gt_words += 1;
                    let shift = s.injected as usize;
                    if gt.iter().any(|&g| g + shift == top) {
                        c.gt_top += 1;
                    }
                }
            }
            seeds.push(c);
        }
        let mean = |f: fn(&SeedCounts) -> f64| {
            if seeds.is_empty() {
                0.0
            } else {
                seeds.iter().map(f).sum::<f64>() / seeds.len() as f64
            }
        };
        levels.push(LevelResult {
            p_syn,
            prediction_rate: mean(|c| rate(c.predicted, c.words)),
            synthetic_rate: mean(|c| rate(c.synthetic_top, c.words)),
            gt_rate: mean(|c| rate(c.gt_top, c.gt_words)),
            seeds,
            failed_seeds,
        });
    }
    Ok(SyntheticCurves { levels })
}
