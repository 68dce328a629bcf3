//! Python module `pycharcd`: load or train taggers, run contextual
//! decomposition, and use the statistics helpers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use charcd::attribution::{
    enumerate_candidates, rank_candidates, resolve_label, singleton_scores, topk_segmentation_eval, CandidateMode,
};
use charcd::cd::{self, IndexSet, WordAttributor};
use charcd::corpus::{self, FeatureSchema, Ruleset};
use charcd::models::{self, Architecture, EncoderConfig, TrainConfig};
use charcd::stats::{self, Group};
use charcd::tensor::Rng;

create_exception!(pycharcd, CharcdError, PyException);

/// `(epoch, train_loss, valid_accuracy)` per epoch.
type History = Vec<(usize, f64, f64)>;
/// `(a, b, z, p, p_adjusted)`.
type Pairwise = (String, String, f64, f64, f64);
/// Test words as `(surface, {class: value})`.
type TestWords = Vec<(String, BTreeMap<String, String>)>;

fn err(e: impl std::fmt::Display) -> PyErr {
    CharcdError::new_err(e.to_string())
}

fn arch(name: &str) -> PyResult<Architecture> {
    name.parse().map_err(|_| err(format!("unknown architecture {name:?}")))
}

fn ruleset(name: &str) -> PyResult<Ruleset> {
    match name {
        "plural_suffix" => Ok(Ruleset::plural_suffix()),
        "ambiguous_number" => Ok(Ruleset::ambiguous_number()),
        toml => Ruleset::from_toml(toml).map_err(err),
    }
}

fn history_rows(h: &models::TrainHistory) -> History {
    h.epochs
        .iter()
        .map(|e| (e.epoch, e.train_loss, e.valid_accuracy))
        .collect()
}

#[pyclass(frozen)]
struct Model {
    inner: models::Model,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Model {
            inner: models::load_model(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        models::save_model(&self.inner, path).map_err(err)
    }

    #[getter]
    fn architecture(&self) -> String {
        self.inner.architecture().to_string()
    }

    /// `[(class, [labels])]` in head order.
    fn classes(&self) -> Vec<(String, Vec<String>)> {
        self.inner
            .schema
            .classes
            .iter()
            .map(|c| (c.name.clone(), c.labels.clone()))
            .collect()
    }

    /// Encoded ids: start symbol, characters, end symbol, padding.
    fn encode(&self, word: &str) -> Vec<usize> {
        self.inner.encode(word)
    }

    fn logits(&self, word: &str) -> PyResult<Vec<Vec<f64>>> {
        self.inner.logits(word).map_err(err)
    }

    fn predict(&self, word: &str) -> PyResult<BTreeMap<String, String>> {
        Ok(self.inner.predict_labels(word).map_err(err)?.into_iter().collect())
    }

    /// `(beta, gamma)` of the word representation for encoded positions.
    fn decompose(&self, word: &str, positions: Vec<usize>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let ids = self.inner.encode(word);
        let set = IndexSet::new(positions, &ids).map_err(err)?;
        let d = cd::decompose(&self.inner, &ids, &set).map_err(err)?;
        Ok((d.beta, d.gamma))
    }

    /// Relevant score of each character for `class=value`.
    fn singleton_scores(&self, word: &str, class: &str, value: &str) -> PyResult<Vec<f64>> {
        singleton_scores(&self.inner, word, class, value).map_err(err)
    }

    /// Relevant score of a set of 0-based character positions.
    fn score(&self, word: &str, class: &str, value: &str, chars: Vec<usize>) -> PyResult<f64> {
        let (k, j) = resolve_label(&self.inner, class, value).map_err(err)?;
        let a = WordAttributor::new(&self.inner, word).map_err(err)?;
        let set = IndexSet::from_chars(chars, a.ids()).map_err(err)?;
        a.score(&self.inner.heads().heads[k], j, &set).map_err(err)
    }

    /// Candidate sets of `k` characters ranked by score, as
    /// `[(char_positions, score)]`.
    #[pyo3(signature = (word, class, value, k, mode = "cons"))]
    fn rank(&self, word: &str, class: &str, value: &str, k: usize, mode: &str) -> PyResult<Vec<(Vec<usize>, f64)>> {
        let mode: CandidateMode = mode.parse().map_err(err)?;
        let (head, j) = resolve_label(&self.inner, class, value).map_err(err)?;
        let a = WordAttributor::new(&self.inner, word).map_err(err)?;
        let len = word.chars().count();
        let heads = self.inner.heads();
        let scorer = a.scorer(heads.heads[head], j).map_err(err)?;
        let cands = enumerate_candidates(len, k, mode).map_err(err)?;
        Ok(rank_candidates(&scorer, a.ids(), &cands.sets)
            .map_err(err)?
            .into_iter()
            .map(|r| (r.index_set.char_positions(len), r.score))
            .collect())
    }

    /// Per-class and average accuracy on a CoNLL-U file.
    fn evaluate(&self, conllu: &str) -> PyResult<BTreeMap<String, f64>> {
        let f = BufReader::new(File::open(conllu).map_err(err)?);
        let words = corpus::parse_conllu(f, 0, &self.inner.schema).map_err(err)?;
        let (splits, _) = corpus::dedupe_and_split(Vec::new(), Vec::new(), words).map_err(err)?;
        let r = models::evaluate_accuracy(&self.inner, &splits.test, &self.inner.schema).map_err(err)?;
        let mut out: BTreeMap<String, f64> = r.per_class.into_iter().collect();
        out.insert("average".into(), r.average);
        Ok(out)
    }

    /// Top-k hit counts against a segmentation file: `[(k, correct)]` and
    /// the number of evaluated pairs.
    #[pyo3(signature = (segments, topk = 3, mode = "cons"))]
    fn segeval(&self, segments: &str, topk: usize, mode: &str) -> PyResult<(Vec<(usize, usize)>, usize)> {
        let mode: CandidateMode = mode.parse().map_err(err)?;
        let f = BufReader::new(File::open(segments).map_err(err)?);
        let ann = corpus::parse_segmentation(f, &self.inner.schema).map_err(err)?;
        let r = topk_segmentation_eval(&self.inner, &ann, topk, mode).map_err(err)?;
        Ok(((1..=topk).map(|k| (k, r.correct[k - 1])).collect(), r.evaluated))
    }
}

/// Trains on a generated toy corpus (`plural_suffix`, `ambiguous_number`,
/// or a TOML ruleset). Returns the model, the test words as
/// `(surface, {class: value})`, and `(epoch, loss, valid_accuracy)` rows.
#[pyfunction]
#[pyo3(signature = (ruleset = "plural_suffix", words = 2000, seed = 1, arch = "cnn", max_epochs = 20))]
fn train_toy(
    ruleset: &str,
    words: usize,
    seed: u64,
    arch: &str,
    max_epochs: usize,
) -> PyResult<(Model, TestWords, History)> {
    let rules = self::ruleset(ruleset)?;
    let corpus = corpus::generate_toy_corpus(&rules, words, &mut Rng::seeded(seed)).map_err(err)?;
    let splits = corpus.split(0.1, 0.1);
    let cfg = TrainConfig {
        max_epochs,
        seed,
        ..TrainConfig::default()
    };
    let encoder = EncoderConfig::default_for(self::arch(arch)?);
    let (model, history) = models::train(encoder, &corpus.schema, &splits.train, &splits.valid, &cfg).map_err(err)?;
    let test = splits.test.into_iter().map(|w| (w.surface, w.features)).collect();
    Ok((Model { inner: model }, test, history_rows(&history)))
}

/// Trains on CoNLL-U files using the built-in schema for `lang` (or one
/// inferred from the training file).
#[pyfunction]
#[pyo3(signature = (lang, train, valid, arch = "cnn", max_epochs = 50, seed = 1, skip_lines = 0))]
fn train_conllu(
    lang: &str,
    train: &str,
    valid: &str,
    arch: &str,
    max_epochs: usize,
    seed: u64,
    skip_lines: usize,
) -> PyResult<(Model, History)> {
    let open = |p: &str| File::open(p).map(BufReader::new).map_err(err);
    let schema = match FeatureSchema::builtin(lang) {
        Some(s) => s,
        None => {
            let tokens = corpus::read_conllu_tokens(open(train)?, skip_lines).map_err(err)?;
            FeatureSchema::infer(
                lang,
                tokens
                    .iter()
                    .flat_map(|t| t.feats.iter().map(|(k, v)| (k.as_str(), v.as_str()))),
            )
        }
    };
    let tr = corpus::parse_conllu(open(train)?, skip_lines, &schema).map_err(err)?;
    let va = corpus::parse_conllu(open(valid)?, 0, &schema).map_err(err)?;
    let (splits, _) = corpus::dedupe_and_split(tr, va, Vec::new()).map_err(err)?;
    let cfg = TrainConfig {
        max_epochs,
        seed,
        ..TrainConfig::default()
    };
    let encoder = EncoderConfig::default_for(self::arch(arch)?);
    let (model, history) = models::train(encoder, &schema, &splits.train, &splits.valid, &cfg).map_err(err)?;
    Ok((Model { inner: model }, history_rows(&history)))
}

/// Splits `f(sum(ys)) - f(0)` over the components of `ys`.
#[pyfunction]
#[pyo3(signature = (ys, activation = "relu"))]
fn linearize(ys: Vec<f64>, activation: &str) -> PyResult<Vec<f64>> {
    let f: fn(f64) -> f64 = match activation {
        "relu" => |x| x.max(0.0),
        "tanh" => f64::tanh,
        "sigmoid" => |x| 1.0 / (1.0 + (-x).exp()),
        other => return Err(err(format!("unknown activation {other:?}"))),
    };
    cd::linearize_activation(&ys, f).map_err(err)
}

fn groups(map: BTreeMap<String, Vec<f64>>) -> Vec<Group> {
    map.into_iter().map(|(k, v)| Group::new(k, v)).collect()
}

/// `(H, df, p)` for named groups.
#[pyfunction]
fn kruskal_wallis(groups: BTreeMap<String, Vec<f64>>) -> PyResult<(f64, usize, f64)> {
    let r = stats::kruskal_wallis(&self::groups(groups)).map_err(err)?;
    Ok((r.h, r.df, r.p))
}

/// `[(a, b, z, p, p_adjusted)]` for every pair of groups, in name order.
#[pyfunction]
fn dunn(groups: BTreeMap<String, Vec<f64>>) -> PyResult<Vec<Pairwise>> {
    Ok(stats::dunn_pairwise(&self::groups(groups))
        .map_err(err)?
        .into_iter()
        .map(|p| (p.a, p.b, p.z, p.p, p.p_adjusted))
        .collect())
}

#[pyfunction]
fn chi2_upper_tail(x: f64, df: usize) -> PyResult<f64> {
    stats::chi2_upper_tail(x, df).map_err(err)
}

#[pymodule]
pub fn pycharcd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CharcdError", m.py().get_type::<CharcdError>())?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train_toy, m)?)?;
    m.add_function(wrap_pyfunction!(train_conllu, m)?)?;
    m.add_function(wrap_pyfunction!(linearize, m)?)?;
    m.add_function(wrap_pyfunction!(kruskal_wallis, m)?)?;
    m.add_function(wrap_pyfunction!(dunn, m)?)?;
    m.add_function(wrap_pyfunction!(chi2_upper_tail, m)?)?;
    Ok(())
}
