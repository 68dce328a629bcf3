use super::{ModelError, Result};
use crate::tensor::{dot, Graph, NodeId, ParamId, Tensor};

/// Filters of one width: `weight` is `[count, width · d]`, each row the
/// column-concatenation `W_0 | W_1 | … | W_{n-1}` of one filter.
#[derive(Debug, Clone, Copy)]
pub struct FilterBank<'a> {
    pub width: usize,
    pub weight: &'a Tensor,
    pub bias: &'a Tensor,
}

impl FilterBank<'_> {
    pub fn count(&self) -> usize {
        self.weight.rows()
    }

    /// `W_i` of filter `f` (the slice applied to `x_{t+i}`).
    pub fn column(&self, f: usize, i: usize, d: usize) -> &[f64] {
        &self.weight.row(f)[i * d..(i + 1) * d]
    }
}

#[derive(Debug, Clone)]
pub struct CnnWeights<'a> {
    pub embedding: &'a Tensor,
    pub banks: Vec<FilterBank<'a>>,
}

impl CnnWeights<'_> {
    pub fn embed_dim(&self) -> usize {
        self.embedding.row_len()
    }

    pub fn max_width(&self) -> usize {
        self.banks.iter().map(|b| b.width).max().unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.banks.iter().map(|b| b.count()).sum()
    }

    pub(crate) fn embed(&self, ids: &[usize]) -> Result<Vec<f64>> {
        let v = self.embedding.rows();
        let mut x = Vec::with_capacity(ids.len() * self.embed_dim());
        for &id in ids {
            if id >= v {
                return Err(ModelError::Dimension {
                    expected: v,
                    actual: id,
                });
            }
            x.extend_from_slice(self.embedding.row(id));
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnOutput {
    /// Max-pooled ReLU activations, banks concatenated in width order.
    pub repr: Vec<f64>,
    /// Winning time step of every filter (first on ties).
    pub argmax: Vec<usize>,
}

/// Convolution, ReLU and max-over-time for every filter.
pub fn cnn_forward(w: &CnnWeights<'_>, ids: &[usize]) -> Result<CnnOutput> {
    let width = w.max_width();
    if ids.len() < width {
        return Err(ModelError::SequenceTooShort { len: ids.len(), width });
    }
    let d = w.embed_dim();
    let x = w.embed(ids)?;
    let mut repr = Vec::with_capacity(w.output_dim());
    let mut argmax = Vec::with_capacity(w.output_dim());
    for bank in &w.banks {
        let n = bank.width;
        let positions = ids.len() - n + 1;
        for f in 0..bank.count() {
            let wf = bank.weight.row(f);
            let b = bank.bias.data()[f];
            let mut best = f64::NEG_INFINITY;
            let mut best_t = 0;
            for t in 0..positions {
                let z = b + dot(wf, &x[t * d..(t + n) * d]);
                let c = z.max(0.0);
                if c > best {
                    best = c;
                    best_t = t;
                }
            }
            repr.push(best);
            argmax.push(best_t);
        }
    }
    Ok(CnnOutput { repr, argmax })
}

pub(crate) fn cnn_graph(
    g: &mut Graph<'_>,
    embedding: ParamId,
    banks: &[(usize, ParamId, ParamId)],
    ids: &[usize],
) -> Result<NodeId> {
    let width = banks.iter().map(|b| b.0).max().unwrap_or(0);
    if ids.len() < width {
        return Err(ModelError::SequenceTooShort { len: ids.len(), width });
    }
    let table = g.param(embedding);
    let x = g.embedding(table, ids)?;
    let mut pooled = Vec::with_capacity(banks.len());
    for &(n, wid, bid) in banks {
        let (wn, bn) = (g.param(wid), g.param(bid));
        let z = g.conv1d(x, wn, bn, n)?;
        let c = g.relu(z)?;
        pooled.push(g.max_over_time(c)?);
    }
    Ok(g.concat(&pooled)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CharVocab, FeatureSchema};
    use crate::models::{EncoderConfig, Model};
    use crate::tensor::Rng;

    fn model() -> Model {
        let vocab = CharVocab::from_chars("abcdefg".chars());
        Model::init(
            EncoderConfig::cnn_default(),
            FeatureSchema::builtin("es").unwrap(),
            vocab,
            &mut Rng::seeded(3),
        )
        .unwrap()
    }

    #[test]
    fn output_dim_is_525() {
        let m = model();
        let out = cnn_forward(&m.cnn().unwrap(), &m.encode("abc")).unwrap();
        assert_eq!(out.repr.len(), 525);
        assert_eq!(out.argmax.len(), 525);
    }

    #[test]
    fn zero_embeddings_output_relu_bias() {
        let mut m = model();
        let e = m.params.find("embedding").unwrap();
        m.params.get_mut(e).data_mut().fill(0.0);
        let b3 = m.params.find("conv3.bias").unwrap();
        for (i, v) in m.params.get_mut(b3).data_mut().iter_mut().enumerate() {
            *v = if i % 2 == 0 { 0.7 } else { -0.4 };
        }
        let out = cnn_forward(&m.cnn().unwrap(), &m.encode("ab")).unwrap();
        let start = 25 + 50;
        for (i, &v) in out.repr[start..start + 75].iter().enumerate() {
            assert_eq!(v, if i % 2 == 0 { 0.7 } else { 0.0 });
        }
    }

    #[test]
    fn width_one_filter_by_hand() {
        // d = 2, one width-1 filter W = (1, -1), b = 0.5, word of 3 chars
        // encoded to 5 ids; embeddings chosen by hand.
        let emb = Tensor::new(
            vec![4, 2],
            vec![
                0.0, 0.0, // pad
                0.3, 0.1, // id 1
                -1.0, 2.0, // id 2
                2.0, -1.0, // id 3
            ],
        )
        .unwrap();
        let w = Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap();
        let b = Tensor::vector(vec![0.5]).unwrap();
        let weights = CnnWeights {
            embedding: &emb,
            banks: vec![FilterBank {
                width: 1,
                weight: &w,
                bias: &b,
            }],
        };
        let ids = [2, 1, 3, 1, 2];
        // z = 0.5 + (e0 - e1): -2.5, 0.7, 3.5, 0.7, -2.5 -> max at t = 2.
        let out = cnn_forward(&weights, &ids).unwrap();
        assert!((out.repr[0] - 3.5).abs() < 1e-15);
        assert_eq!(out.argmax, vec![2]);
    }

    #[test]
    fn graph_matches_plain_forward() {
        let m = model();
        let ids = m.encode("gafbe");
        let plain = cnn_forward(&m.cnn().unwrap(), &ids).unwrap();
        let mut g = Graph::new(&m.params);
        let node = m.encoder_graph(&mut g, &ids).unwrap();
        let diff = g
            .value(node)
            .data()
            .iter()
            .zip(&plain.repr)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn short_sequence_rejected() {
        let m = model();
        let err = cnn_forward(&m.cnn().unwrap(), &[2, 4, 3]).unwrap_err();
        assert!(matches!(err, ModelError::SequenceTooShort { len: 3, width: 6 }));
    }
}
