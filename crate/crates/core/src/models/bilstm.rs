use super::{CellIds, ModelError, Result};
use crate::tensor::{dot, Graph, NodeId, ParamId, Tensor};

/// One LSTM direction. Gate order: input, forget, output, candidate.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell<'a> {
    pub wx: [&'a Tensor; 4],
    pub wh: [&'a Tensor; 4],
    pub b: [&'a Tensor; 4],
}

#[derive(Debug, Clone, Copy)]
pub struct BilstmWeights<'a> {
    pub embedding: &'a Tensor,
    pub forward: LstmCell<'a>,
    pub backward: LstmCell<'a>,
}

/// State after one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LstmCell<'_> {
    pub fn hidden(&self) -> usize {
        self.b[0].len()
    }

    /// `Wx_k x + Wh_k h + b_k` for gate `k`.
    pub(crate) fn preactivation(&self, k: usize, x: &[f64], h: &[f64]) -> Vec<f64> {
        (0..self.hidden())
            .map(|r| dot(self.wx[k].row(r), x) + dot(self.wh[k].row(r), h) + self.b[k].data()[r])
            .collect()
    }
}

/// Runs one direction over `xs` (already ordered for that direction).
pub fn lstm_direction_forward(cell: &LstmCell<'_>, xs: &[&[f64]]) -> Vec<LstmStep> {
    let n = cell.hidden();
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut steps = Vec::with_capacity(xs.len());
    for x in xs {
        let i: Vec<f64> = cell.preactivation(0, x, &h).into_iter().map(sigmoid).collect();
        let f: Vec<f64> = cell.preactivation(1, x, &h).into_iter().map(sigmoid).collect();
        let o: Vec<f64> = cell.preactivation(2, x, &h).into_iter().map(sigmoid).collect();
        let g: Vec<f64> = cell.preactivation(3, x, &h).into_iter().map(f64::tanh).collect();
        for r in 0..n {
            c[r] = f[r] * c[r] + i[r] * g[r];
            h[r] = o[r] * c[r].tanh();
        }
        steps.push(LstmStep {
            h: h.clone(),
            c: c.clone(),
        });
    }
    steps
}

/// Final forward state concatenated with final backward state.
pub fn bilstm_forward(w: &BilstmWeights<'_>, ids: &[usize]) -> Result<Vec<f64>> {
    if ids.is_empty() {
        return Err(ModelError::Dimension { expected: 1, actual: 0 });
    }
    let v = w.embedding.rows();
    if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
        return Err(ModelError::Dimension {
            expected: v,
            actual: bad,
        });
    }
    let xs: Vec<&[f64]> = ids.iter().map(|&i| w.embedding.row(i)).collect();
    let fwd = lstm_direction_forward(&w.forward, &xs);
    let rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
    let bwd = lstm_direction_forward(&w.backward, &rev);
    let mut out = fwd.last().unwrap().h.clone();
    out.extend_from_slice(&bwd.last().unwrap().h);
    Ok(out)
}

fn direction_graph(g: &mut Graph<'_>, cell: &CellIds, xs: &[NodeId], hidden: usize) -> Result<NodeId> {
    let zeros = Tensor::zeros(&[hidden]);
    let mut h = g.input(zeros.clone())?;
    let mut c = g.input(zeros)?;
    for &x in xs {
        let mut gates = Vec::with_capacity(4);
        for k in 0..4 {
            let (wx, wh, b) = (g.param(cell.wx[k]), g.param(cell.wh[k]), g.param(cell.b[k]));
            let zx = g.affine(wx, x, Some(b))?;
            let zh = g.affine(wh, h, None)?;
            let z = g.add(zx, zh)?;
            gates.push(if k == 3 { g.tanh(z)? } else { g.sigmoid(z)? });
        }
        let fc = g.mul(gates[1], c)?;
        let ig = g.mul(gates[0], gates[3])?;
        c = g.add(fc, ig)?;
        let tc = g.tanh(c)?;
        h = g.mul(gates[2], tc)?;
    }
    Ok(h)
}

pub(crate) fn bilstm_graph(
    g: &mut Graph<'_>,
    embedding: ParamId,
    forward: &CellIds,
    backward: &CellIds,
    ids: &[usize],
) -> Result<NodeId> {
    if ids.is_empty() {
        return Err(ModelError::Dimension { expected: 1, actual: 0 });
    }
    let bias_node = g.param(forward.b[0]);
    let hidden = g.value(bias_node).len();
    let table = g.param(embedding);
    let x = g.embedding(table, ids)?;
    let rows: Vec<NodeId> = (0..ids.len())
        .map(|t| g.row(x, t))
        .collect::<std::result::Result<_, _>>()?;
    let hf = direction_graph(g, forward, &rows, hidden)?;
    let rev: Vec<NodeId> = rows.iter().rev().copied().collect();
    let hb = direction_graph(g, backward, &rev, hidden)?;
    Ok(g.concat(&[hf, hb])?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CharVocab, FeatureSchema};
    use crate::models::{EncoderConfig, Model};
    use crate::tensor::Rng;

    fn model(hidden: usize, seed: u64) -> Model {
        Model::init(
            EncoderConfig::Bilstm { embed_dim: 5, hidden },
            FeatureSchema::builtin("es").unwrap(),
            CharVocab::from_chars("abcd".chars()),
            &mut Rng::seeded(seed),
        )
        .unwrap()
    }

    fn randomise(m: &mut Model, seed: u64) {
        let mut rng = Rng::seeded(seed);
        for id in m.params.ids().collect::<Vec<_>>() {
            for v in m.params.get_mut(id).data_mut() {
                *v = rng.uniform() * 2.0 - 1.0;
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut m = model(4, 1);
        for id in m.params.ids().collect::<Vec<_>>() {
            m.params.get_mut(id).data_mut().fill(0.0);
        }
        let out = bilstm_forward(&m.bilstm().unwrap(), &m.encode("abc")).unwrap();
        assert_eq!(out, vec![0.0; 8]);
    }

    #[test]
    fn single_step_mirrored_directions_agree() {
        let mut m = model(3, 2);
        randomise(&mut m, 9);
        // Copy forward weights into the backward direction.
        let names: Vec<String> = m.params.iter().map(|(n, _)| n.to_string()).collect();
        for n in names.iter().filter(|n| n.contains(".fwd.")) {
            let src = m.params.get(m.params.find(n).unwrap()).clone();
            let dst = m.params.find(&n.replace(".fwd.", ".bwd.")).unwrap();
            *m.params.get_mut(dst) = src;
        }
        let out = bilstm_forward(&m.bilstm().unwrap(), &[5]).unwrap();
        assert_eq!(out[..3], out[3..]);
    }

    /// Independent step-by-step recurrence written out per unit.
    fn oracle(m: &Model, ids: &[usize]) -> Vec<f64> {
        let get = |n: &str| m.params.get(m.params.find(n).unwrap()).clone();
        let emb = get("embedding");
        let mut out = Vec::new();
        for dir in ["fwd", "bwd"] {
            let w = |kind: &str, gate: &str| get(&format!("lstm.{dir}.{kind}_{gate}"));
            let hidden = w("b", "i").len();
            let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
            let order: Vec<usize> = if dir == "fwd" {
                ids.to_vec()
            } else {
                ids.iter().rev().copied().collect()
            };
            for &id in &order {
                let x = emb.row(id);
                let mut next_h = vec![0.0; hidden];
                let mut next_c = vec![0.0; hidden];
                for r in 0..hidden {
                    let pre = |gate: &str| {
                        let wx = w("wx", gate);
                        let wh = w("wh", gate);
                        let mut s = w("b", gate).data()[r];
                        for (k, xv) in x.iter().enumerate() {
                            s += wx.row(r)[k] * xv;
                        }
                        for (k, hv) in h.iter().enumerate() {
                            s += wh.row(r)[k] * hv;
                        }
                        s
                    };
                    let sg = |v: f64| 1.0 / (1.0 + (-v).exp());
                    let (i, f, o, g) = (sg(pre("i")), sg(pre("f")), sg(pre("o")), pre("g").tanh());
                    next_c[r] = f * c[r] + i * g;
                    next_h[r] = o * next_c[r].tanh();
                }
                h = next_h;
                c = next_c;
            }
            out.extend(h);
        }
        out
    }

    #[test]
    fn matches_step_by_step_oracle() {
        let mut m = model(6, 3);
        randomise(&mut m, 4);
        let ids = m.encode("abdc");
        let got = bilstm_forward(&m.bilstm().unwrap(), &ids).unwrap();
        let want = oracle(&m, &ids);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn graph_matches_plain_forward() {
        let mut m = model(6, 5);
        randomise(&mut m, 6);
        let ids = m.encode("dcab");
        let plain = bilstm_forward(&m.bilstm().unwrap(), &ids).unwrap();
        let mut g = Graph::new(&m.params);
        let node = m.encoder_graph(&mut g, &ids).unwrap();
        for (a, b) in g.value(node).data().iter().zip(&plain) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
