//! Character-level word encoders (CNN and BiLSTM), per-class softmax heads,
//! joint training, evaluation and model files.

mod bilstm;
mod cnn;
mod eval;
mod heads;
mod io;
mod train;

pub use bilstm::{bilstm_forward, lstm_direction_forward, BilstmWeights, LstmCell, LstmStep};
pub use cnn::{cnn_forward, CnnOutput, CnnWeights, FilterBank};
pub use eval::{evaluate_accuracy, majority_baseline, AccuracyReport, EvaluationReport};
pub use heads::{classify, head_logits, joint_loss, ClassifierHeads, Head};
pub use io::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use train::{train, EpochRecord, TrainConfig, TrainHistory};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{encode_word, CharVocab, CorpusError, FeatureSchema};
use crate::tensor::{orthogonal_init, uniform_init, Graph, NodeId, ParamId, ParamStore, Rng, Tensor, TensorError};
use bilstm::bilstm_graph;
pub(crate) use bilstm::sigmoid;
use cnn::cnn_graph;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("sequence of length {len} is shorter than the widest filter ({width})")]
    SequenceTooShort { len: usize, width: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence { epoch: usize, batch: usize, detail: String },
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported model format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("model file checksum mismatch")]
    Checksum,
    #[error("model file corrupt: {0}")]
    Corrupt(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Cnn,
    Bilstm,
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Architecture::Cnn => "cnn",
            Architecture::Bilstm => "bilstm",
        })
    }
}

impl std::str::FromStr for Architecture {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(Architecture::Cnn),
            "bilstm" | "lstm" => Ok(Architecture::Bilstm),
            other => Err(ModelError::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Encoder hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum EncoderConfig {
    Cnn {
        embed_dim: usize,
        /// `(width, filter count)` per bank.
        banks: Vec<(usize, usize)>,
    },
    Bilstm {
        embed_dim: usize,
        hidden: usize,
    },
}

impl EncoderConfig {
    /// 50-dim embeddings; 25·n filters of width n for n = 1..=6.
    pub fn cnn_default() -> Self {
        EncoderConfig::Cnn {
            embed_dim: 50,
            banks: (1..=6).map(|n| (n, 25 * n)).collect(),
        }
    }

    /// 50-dim embeddings; 100 hidden units per direction.
    pub fn bilstm_default() -> Self {
        EncoderConfig::Bilstm {
            embed_dim: 50,
            hidden: 100,
        }
    }

    pub fn default_for(arch: Architecture) -> Self {
        match arch {
            Architecture::Cnn => Self::cnn_default(),
            Architecture::Bilstm => Self::bilstm_default(),
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            EncoderConfig::Cnn { .. } => Architecture::Cnn,
            EncoderConfig::Bilstm { .. } => Architecture::Bilstm,
        }
    }

    pub fn embed_dim(&self) -> usize {
        match self {
            EncoderConfig::Cnn { embed_dim, .. } | EncoderConfig::Bilstm { embed_dim, .. } => *embed_dim,
        }
    }

    /// Dimension of the word representation fed to the heads.
    pub fn output_dim(&self) -> usize {
        match self {
            EncoderConfig::Cnn { banks, .. } => banks.iter().map(|&(_, c)| c).sum(),
            EncoderConfig::Bilstm { hidden, .. } => 2 * hidden,
        }
    }

    /// Encoded sequences are right-padded to this length.
    pub fn min_len(&self) -> usize {
        match self {
            EncoderConfig::Cnn { banks, .. } => banks.iter().map(|&(w, _)| w).max().unwrap_or(0),
            EncoderConfig::Bilstm { .. } => 0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            EncoderConfig::Cnn { embed_dim, banks } => {
                *embed_dim > 0 && !banks.is_empty() && banks.iter().all(|&(w, c)| w > 0 && c > 0)
            }
            EncoderConfig::Bilstm { embed_dim, hidden } => *embed_dim > 0 && *hidden > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::Config(format!("invalid encoder config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Layout {
    Cnn {
        embedding: ParamId,
        banks: Vec<(usize, ParamId, ParamId)>,
    },
    Bilstm {
        embedding: ParamId,
        forward: CellIds,
        backward: CellIds,
    },
}

/// Gate order: input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CellIds {
    pub wx: [ParamId; 4],
    pub wh: [ParamId; 4],
    pub b: [ParamId; 4],
}

pub(crate) const GATES: [&str; 4] = ["i", "f", "o", "g"];

/// Trained (or freshly initialised) tagger: encoder + heads + vocabulary +
/// feature schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: EncoderConfig,
    pub schema: FeatureSchema,
    pub vocab: CharVocab,
    pub params: ParamStore,
    layout: Layout,
    heads: Vec<(ParamId, ParamId)>,
}

impl Model {
    /// Embeddings ~ U[-0.01, 0.01); weight matrices orthogonal; biases zero.
    pub fn init(config: EncoderConfig, schema: FeatureSchema, vocab: CharVocab, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        if schema.is_empty() {
            return Err(ModelError::SchemaMismatch("schema has no classes".into()));
        }
        let mut params = ParamStore::new();
        let d = config.embed_dim();
        let embedding = params.add("embedding", uniform_init(&[vocab.len(), d], -0.01, 0.01, rng)?);
        let layout = match &config {
            EncoderConfig::Cnn { banks, .. } => {
                let mut ids = Vec::new();
                for &(w, c) in banks {
                    let wid = params.add(format!("conv{w}.weight"), orthogonal_init(c, w * d, rng)?);
                    let bid = params.add(format!("conv{w}.bias"), Tensor::zeros(&[c]));
                    ids.push((w, wid, bid));
                }
                Layout::Cnn { embedding, banks: ids }
            }
            EncoderConfig::Bilstm { hidden, .. } => {
                let cell = |dir: &str, params: &mut ParamStore, rng: &mut Rng| -> Result<CellIds> {
                    let mut wx = Vec::new();
                    let mut wh = Vec::new();
                    let mut b = Vec::new();
                    for g in GATES {
                        wx.push(params.add(format!("lstm.{dir}.wx_{g}"), orthogonal_init(*hidden, d, rng)?));
                        wh.push(params.add(format!("lstm.{dir}.wh_{g}"), orthogonal_init(*hidden, *hidden, rng)?));
                        b.push(params.add(format!("lstm.{dir}.b_{g}"), Tensor::zeros(&[*hidden])));
                    }
                    Ok(CellIds {
                        wx: wx.try_into().unwrap(),
                        wh: wh.try_into().unwrap(),
                        b: b.try_into().unwrap(),
                    })
                };
                let forward = cell("fwd", &mut params, rng)?;
                let backward = cell("bwd", &mut params, rng)?;
                Layout::Bilstm {
                    embedding,
                    forward,
                    backward,
                }
            }
        };
        let d2 = config.output_dim();
        let mut heads = Vec::new();
        for c in &schema.classes {
            let w = params.add(
                format!("head.{}.weight", c.name),
                orthogonal_init(c.num_labels(), d2, rng)?,
            );
            let b = params.add(format!("head.{}.bias", c.name), Tensor::zeros(&[c.num_labels()]));
            heads.push((w, b));
        }
        Ok(Model {
            config,
            schema,
            vocab,
            params,
            layout,
            heads,
        })
    }

    /// Rebuilds parameter bookkeeping for a store whose tensors were created
    /// by [`Model::init`] with the same config and schema.
    pub(crate) fn from_parts(
        config: EncoderConfig,
        schema: FeatureSchema,
        vocab: CharVocab,
        params: ParamStore,
    ) -> Result<Self> {
        let mut shadow = Model::init(config, schema, vocab, &mut Rng::seeded(0))?;
        if shadow.params.len() != params.len() {
            return Err(ModelError::Corrupt(format!(
                "expected {} tensors, found {}",
                shadow.params.len(),
                params.len()
            )));
        }
        for ((n1, t1), (n2, t2)) in shadow.params.iter().zip(params.iter()) {
            if n1 != n2 || t1.shape() != t2.shape() {
                return Err(ModelError::Corrupt(format!(
                    "tensor {n2} {:?} does not match expected {n1} {:?}",
                    t2.shape(),
                    t1.shape()
                )));
            }
        }
        shadow.params = params;
        Ok(shadow)
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture()
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn encode(&self, surface: &str) -> Vec<usize> {
        encode_word(surface, &self.vocab, self.config.min_len())
    }

    pub fn cnn(&self) -> Option<CnnWeights<'_>> {
        match &self.layout {
            Layout::Cnn { embedding, banks } => Some(CnnWeights {
                embedding: self.params.get(*embedding),
                banks: banks
                    .iter()
                    .map(|&(width, w, b)| FilterBank {
                        width,
                        weight: self.params.get(w),
                        bias: self.params.get(b),
                    })
                    .collect(),
            }),
            _ => None,
        }
    }

    pub fn bilstm(&self) -> Option<BilstmWeights<'_>> {
        match &self.layout {
            Layout::Bilstm {
                embedding,
                forward,
                backward,
            } => {
                let cell = |c: &CellIds| LstmCell {
                    wx: c.wx.map(|p| self.params.get(p)),
                    wh: c.wh.map(|p| self.params.get(p)),
                    b: c.b.map(|p| self.params.get(p)),
                };
                Some(BilstmWeights {
                    embedding: self.params.get(*embedding),
                    forward: cell(forward),
                    backward: cell(backward),
                })
            }
            _ => None,
        }
    }

    pub fn heads(&self) -> ClassifierHeads<'_> {
        ClassifierHeads {
            heads: self
                .heads
                .iter()
                .zip(&self.schema.classes)
                .map(|(&(w, b), c)| Head {
                    class: &c.name,
                    weight: self.params.get(w),
                    bias: self.params.get(b),
                })
                .collect(),
        }
    }

    /// Word representation for an encoded sequence.
    pub fn represent(&self, ids: &[usize]) -> Result<Vec<f64>> {
        match self.architecture() {
            Architecture::Cnn => Ok(cnn_forward(&self.cnn().unwrap(), ids)?.repr),
            Architecture::Bilstm => bilstm_forward(&self.bilstm().unwrap(), ids),
        }
    }

    /// Per-head logits for a surface form.
    pub fn logits(&self, surface: &str) -> Result<Vec<Vec<f64>>> {
        let repr = self.represent(&self.encode(surface))?;
        head_logits(&self.heads(), &repr)
    }

    /// Argmax label id per head.
    pub fn predict(&self, surface: &str) -> Result<Vec<usize>> {
        Ok(self.logits(surface)?.iter().map(|l| argmax(l)).collect())
    }

    pub fn predict_labels(&self, surface: &str) -> Result<Vec<(String, String)>> {
        Ok(self
            .predict(surface)?
            .into_iter()
            .zip(&self.schema.classes)
            .map(|(i, c)| (c.name.clone(), c.labels[i].clone()))
            .collect())
    }

    /// Representation node on a recording tape.
    pub(crate) fn encoder_graph(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<NodeId> {
        match &self.layout {
            Layout::Cnn { embedding, banks } => cnn_graph(g, *embedding, banks, ids),
            Layout::Bilstm {
                embedding,
                forward,
                backward,
            } => bilstm_graph(g, *embedding, forward, backward, ids),
        }
    }

    /// Summed cross-entropy over heads as a scalar node.
    pub(crate) fn loss_graph(&self, g: &mut Graph<'_>, ids: &[usize], gold: &[usize]) -> Result<NodeId> {
        if gold.len() != self.heads.len() {
            return Err(ModelError::Dimension {
                expected: self.heads.len(),
                actual: gold.len(),
            });
        }
        let repr = self.encoder_graph(g, ids)?;
        let mut losses = Vec::with_capacity(self.heads.len());
        for (&(w, b), &y) in self.heads.iter().zip(gold) {
            let (wn, bn) = (g.param(w), g.param(b));
            let z = g.affine(wn, repr, Some(bn))?;
            losses.push(g.softmax_cross_entropy(z, y)?);
        }
        Ok(g.sum(&losses)?)
    }

    /// Summed cross-entropy over all heads for encoded `ids`.
    pub fn loss(&self, ids: &[usize], gold: &[usize]) -> Result<f64> {
        let mut g = Graph::new(&self.params);
        let loss = self.loss_graph(&mut g, ids, gold)?;
        Ok(g.value(loss).data()[0])
    }

    /// Loss and its gradient for every parameter, in store order.
    pub fn loss_gradients(&self, ids: &[usize], gold: &[usize]) -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new(&self.params);
        let loss = self.loss_graph(&mut g, ids, gold)?;
        let grads = g.backward(loss)?;
        Ok((g.value(loss).data()[0], grads.into_dense(&self.params)))
    }
}

/// Index of the largest value; first on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_schema() -> FeatureSchema {
        FeatureSchema::builtin("es").unwrap()
    }

    #[test]
    fn default_cnn_has_525_outputs() {
        assert_eq!(EncoderConfig::cnn_default().output_dim(), 525);
        assert_eq!(EncoderConfig::cnn_default().min_len(), 6);
        assert_eq!(EncoderConfig::bilstm_default().output_dim(), 200);
    }

    #[test]
    fn init_shapes() {
        let vocab = CharVocab::from_chars("abc".chars());
        let m = Model::init(EncoderConfig::cnn_default(), tiny_schema(), vocab, &mut Rng::seeded(1)).unwrap();
        let cnn = m.cnn().unwrap();
        assert_eq!(cnn.embedding.shape(), &[7, 50]);
        let total: usize = cnn.banks.iter().map(|b| b.weight.rows()).sum();
        assert_eq!(total, 525);
        assert_eq!(cnn.banks[5].weight.shape(), &[150, 300]);
        let heads = m.heads();
        assert_eq!(heads.heads.len(), 6);
        assert_eq!(heads.heads[3].weight.shape(), &[3, 525]);
        assert!(cnn.banks.iter().all(|b| b.bias.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn architecture_parses() {
        assert_eq!("CNN".parse::<Architecture>().unwrap(), Architecture::Cnn);
        assert_eq!("bilstm".parse::<Architecture>().unwrap(), Architecture::Bilstm);
        assert!("rnn".parse::<Architecture>().is_err());
    }
}
