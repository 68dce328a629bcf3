use serde::{Deserialize, Serialize};

use super::{CorpusError, Result, WordSample};
use crate::tensor::Rng;

/// Synthetic-token injection for a binary feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Injection probability for the positive class; negatives get `1 - p_syn`.
    pub p_syn: f64,
    pub symbol: char,
    pub class: String,
    /// Label mapped to t = 1.
    pub positive: String,
    /// Label mapped to t = 0.
    pub negative: String,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            p_syn: 1.0,
            symbol: '¤',
            class: "Number".into(),
            positive: "Sing".into(),
            negative: "Plur".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedSample {
    pub sample: WordSample,
    pub target: bool,
    /// Whether the symbol was prepended; real positions then shift by one.
    pub injected: bool,
}

/// Words labelled with either binary value, with features restricted to the
/// configured class.
pub fn binary_subset(samples: &[WordSample], cfg: &SyntheticConfig) -> Vec<WordSample> {
    samples
        .iter()
        .filter(|s| {
            let l = s.label(&cfg.class);
            l == cfg.positive || l == cfg.negative
        })
        .map(|s| {
            let mut features = std::collections::BTreeMap::new();
            features.insert(cfg.class.clone(), s.label(&cfg.class).to_string());
            WordSample::new(s.surface.clone(), features)
        })
        .collect()
}

/// Prepends `cfg.symbol` with probability `p_syn` to positive words and
/// `1 - p_syn` to negative words, one independent draw per word.
pub fn inject_synthetic(samples: &[WordSample], cfg: &SyntheticConfig, rng: &mut Rng) -> Result<Vec<InjectedSample>> {
    if !(0.0..=1.0).contains(&cfg.p_syn) {
        return Err(CorpusError::Config(format!("p_syn {} outside [0, 1]", cfg.p_syn)));
    }
    if cfg.positive == cfg.negative {
        return Err(CorpusError::Config("positive and negative labels coincide".into()));
    }
    samples
        .iter()
        .map(|s| {
            if s.surface.contains(cfg.symbol) {
                return Err(CorpusError::Config(format!(
                    "synthetic symbol {:?} occurs in {:?}",
                    cfg.symbol, s.surface
                )));
            }
            let label = s.label(&cfg.class);
            let target = if label == cfg.positive {
                true
            } else if label == cfg.negative {
                false
            } else {
                return Err(CorpusError::UnknownValue {
                    class: cfg.class.clone(),
                    value: label.to_string(),
                });
            };
            let p = if target { cfg.p_syn } else { 1.0 - cfg.p_syn };
            let injected = rng.bernoulli(p);
            let mut sample = s.clone();
            if injected {
                sample.surface = format!("{}{}", cfg.symbol, s.surface);
            }
            Ok(InjectedSample {
                sample,
                target,
                injected,
            })
        })
        .collect()
}
