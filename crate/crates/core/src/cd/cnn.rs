use super::{
    class_contribution, decompose_conv, decompose_maxpool, decompose_relu, CdError, Decomposition, IndexSet, Result,
};
use crate::models::{cnn_forward, CnnWeights, Head, ModelError};
use crate::tensor::dot;

fn check_set(set: &IndexSet, len: usize) -> Result<()> {
    match set.positions().last() {
        Some(&p) if p >= len => Err(CdError::OutOfBounds { position: p, len }),
        _ => Ok(()),
    }
}

/// Reference decomposition: every window of every filter is decomposed, then
/// the pair at the pooling position is kept.
pub fn cd_cnn(w: &CnnWeights<'_>, ids: &[usize], set: &IndexSet) -> Result<Decomposition> {
    let width = w.max_width();
    if ids.len() < width {
        return Err(ModelError::SequenceTooShort { len: ids.len(), width }.into());
    }
    check_set(set, ids.len())?;
    let d = w.embed_dim();
    let x = w.embed(ids)?;
    let mask = set.mask(ids.len());
    let mut beta = Vec::with_capacity(w.output_dim());
    let mut gamma = Vec::with_capacity(w.output_dim());
    for bank in &w.banks {
        let positions = ids.len() - bank.width + 1;
        let mut bs = Vec::with_capacity(positions);
        let mut gs = Vec::with_capacity(positions);
        let mut cs = Vec::with_capacity(positions);
        for f in 0..bank.count() {
            bs.clear();
            gs.clear();
            cs.clear();
            let row = bank.weight.row(f);
            let b = bank.bias.data()[f];
            for t in 0..positions {
                let (bz, gz, b) = decompose_conv(row, b, &x, d, &mask, t)?;
                let (bc, gc) = decompose_relu(bz, gz, b);
                bs.push(bc);
                gs.push(gc);
                cs.push((b + dot(row, &x[t * d..(t + bank.width) * d])).max(0.0));
            }
            let (bb, gg, _) = decompose_maxpool(&bs, &gs, &cs).expect("non-empty window list");
            beta.push(bb);
            gamma.push(gg);
        }
    }
    Ok(Decomposition { beta, gamma })
}

/// Per-filter offset contributions at the pooling position, cached so each
/// index set costs one linearization per filter.
#[derive(Debug, Clone)]
pub struct CnnAttributor {
    ids: Vec<usize>,
    /// Per filter: window start, bias and `W_i · x_{t*+i}` per offset.
    filters: Vec<(usize, f64, Vec<f64>)>,
}

impl CnnAttributor {
    pub fn new(w: &CnnWeights<'_>, ids: &[usize]) -> Result<Self> {
        let out = cnn_forward(w, ids)?;
        let d = w.embed_dim();
        let x = w.embed(ids)?;
        let mut filters = Vec::with_capacity(w.output_dim());
        let mut k = 0;
        for bank in &w.banks {
            for f in 0..bank.count() {
                let t = out.argmax[k];
                let parts = (0..bank.width)
                    .map(|i| dot(bank.column(f, i, d), &x[(t + i) * d..(t + i + 1) * d]))
                    .collect();
                filters.push((t, bank.bias.data()[f], parts));
                k += 1;
            }
        }
        Ok(CnnAttributor {
            ids: ids.to_vec(),
            filters,
        })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    fn for_each_filter(&self, set: &IndexSet, mut visit: impl FnMut(usize, f64, f64)) -> Result<()> {
        check_set(set, self.ids.len())?;
        let mask = set.mask(self.ids.len());
        for (k, (t, b, parts)) in self.filters.iter().enumerate() {
            let mut bz = 0.0;
            let mut gz = 0.0;
            for (i, u) in parts.iter().enumerate() {
                if mask[t + i] {
                    bz += u;
                } else {
                    gz += u;
                }
            }
            let (bc, gc) = decompose_relu(bz, gz, *b);
            visit(k, bc, gc);
        }
        Ok(())
    }

    pub fn decompose(&self, set: &IndexSet) -> Result<Decomposition> {
        let n = self.filters.len();
        let mut dec = Decomposition {
            beta: vec![0.0; n],
            gamma: vec![0.0; n],
        };
        self.for_each_filter(set, |k, b, g| {
            dec.beta[k] = b;
            dec.gamma[k] = g;
        })?;
        Ok(dec)
    }

    /// `W_j · β` without materializing γ.
    pub fn score(&self, head: &Head<'_>, label: usize, set: &IndexSet) -> Result<f64> {
        if label >= head.num_labels() || head.input_dim() != self.filters.len() {
            // Defer to the checked path for the error value.
            return Ok(class_contribution(head, &self.decompose(set)?, label)?.beta_score);
        }
        let w = head.weight.row(label);
        let mut s = 0.0;
        self.for_each_filter(set, |k, b, _| s += w[k] * b)?;
        Ok(s)
    }
}

/// `W_j[f] · β_f` for every subset of every filter's pooled window, so a
/// set's score is one lookup per filter.
#[derive(Debug, Clone)]
pub struct CnnLabelTable {
    /// Per filter: window start and per-offset-mask score.
    filters: Vec<(usize, Vec<f64>)>,
    len: usize,
}

impl CnnLabelTable {
    /// Score of the set whose sequence positions are the set bits of `bits`.
    pub fn score_bits(&self, bits: u64) -> f64 {
        let mut s = 0.0;
        for (t, row) in &self.filters {
            let width_mask = row.len() as u64 - 1;
            s += row[((bits >> t) & width_mask) as usize];
        }
        s
    }

    pub fn score(&self, set: &IndexSet) -> Result<f64> {
        check_set(set, self.len)?;
        Ok(self.score_bits(set.positions().iter().fold(0u64, |acc, &p| acc | 1 << p)))
    }
}

impl CnnAttributor {
    /// Lookup table for one label; `None` when the sequence is too long for
    /// a 64-bit position mask.
    pub fn label_table(&self, head: &Head<'_>, label: usize) -> Result<Option<CnnLabelTable>> {
        if label >= head.num_labels() {
            return Err(CdError::BadLabel {
                index: label,
                labels: head.num_labels(),
            });
        }
        if head.input_dim() != self.filters.len() {
            return Err(CdError::Dimension {
                expected: head.input_dim(),
                actual: self.filters.len(),
            });
        }
        if self.ids.len() > 64 {
            return Ok(None);
        }
        let w = head.weight.row(label);
        let filters = self
            .filters
            .iter()
            .zip(w)
            .map(|((t, b, parts), wf)| {
                let rows = (0..1usize << parts.len())
                    .map(|mask| {
                        let mut bz = 0.0;
                        let mut gz = 0.0;
                        for (i, u) in parts.iter().enumerate() {
                            if mask >> i & 1 == 1 {
                                bz += u;
                            } else {
                                gz += u;
                            }
                        }
                        wf * decompose_relu(bz, gz, *b).0
                    })
                    .collect();
                (*t, rows)
            })
            .collect();
        Ok(Some(CnnLabelTable {
            filters,
            len: self.ids.len(),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CharVocab, FeatureSchema};
    use crate::models::{EncoderConfig, Model};
    use crate::tensor::Rng;

    fn model(seed: u64) -> Model {
        let mut m = Model::init(
            EncoderConfig::Cnn {
                embed_dim: 6,
                banks: vec![(1, 3), (2, 4), (3, 5)],
            },
            FeatureSchema::builtin("es").unwrap(),
            CharVocab::from_chars("abcdef".chars()),
            &mut Rng::seeded(seed),
        )
        .unwrap();
        let mut rng = Rng::seeded(seed + 100);
        for id in m.params.ids().collect::<Vec<_>>() {
            for v in m.params.get_mut(id).data_mut() {
                *v = rng.normal();
            }
        }
        m
    }

    #[test]
    fn exact_and_matches_fast_path() {
        let mut rng = Rng::seeded(1);
        for trial in 0..50 {
            let m = model(trial);
            let ids = m.encode(["a", "fed", "abcdefab"][trial as usize % 3]);
            let cnn = m.cnn().unwrap();
            let fwd = cnn_forward(&cnn, &ids).unwrap().repr;
            let real: Vec<usize> = (0..ids.len()).filter(|&p| ids[p] != 0).collect();
            let set = IndexSet::new(real.iter().copied().filter(|_| rng.bernoulli(0.5)), &ids).unwrap();
            let dec = cd_cnn(&cnn, &ids, &set).unwrap();
            for (t, f) in dec.total().iter().zip(&fwd) {
                assert!((t - f).abs() < 1e-9);
            }
            let fast = CnnAttributor::new(&cnn, &ids).unwrap().decompose(&set).unwrap();
            assert_eq!(fast, dec);
        }
    }

    #[test]
    fn empty_set_gives_zero_beta() {
        let m = model(3);
        let ids = m.encode("bead");
        let dec = cd_cnn(&m.cnn().unwrap(), &ids, &IndexSet::empty()).unwrap();
        assert!(dec.beta.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn score_matches_contribution() {
        let m = model(4);
        let ids = m.encode("cafe");
        let a = CnnAttributor::new(&m.cnn().unwrap(), &ids).unwrap();
        let heads = m.heads();
        let set = IndexSet::new([2, 3], &ids).unwrap();
        let dec = a.decompose(&set).unwrap();
        for h in &heads.heads {
            for j in 0..h.num_labels() {
                let c = class_contribution(h, &dec, j).unwrap();
                assert!((a.score(h, j, &set).unwrap() - c.beta_score).abs() < 1e-12);
            }
        }
        assert!(a.score(&heads.heads[0], 99, &set).is_err());
    }

    #[test]
    fn label_table_is_bit_identical() {
        let m = model(6);
        let ids = m.encode("abcdeffa");
        let a = CnnAttributor::new(&m.cnn().unwrap(), &ids).unwrap();
        let heads = m.heads();
        let mut rng = Rng::seeded(3);
        for h in &heads.heads {
            let table = a.label_table(h, 1).unwrap().unwrap();
            for _ in 0..20 {
                let set = IndexSet::new((0..ids.len()).filter(|_| rng.bernoulli(0.5)), &ids).unwrap();
                assert_eq!(table.score(&set).unwrap(), a.score(h, 1, &set).unwrap());
            }
        }
    }
}
