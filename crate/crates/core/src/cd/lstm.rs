use super::{linearize_into, CdError, Decomposition, IndexSet, Result};
use crate::models::{sigmoid, BilstmWeights, LstmCell};
use crate::tensor::dot;

/// A gate activation split into the linearized relevant (`r`) and
/// irrelevant (`i`) parts and a bias part `b` that also carries `f(0)`.
struct GateParts {
    r: Vec<f64>,
    i: Vec<f64>,
    b: Vec<f64>,
}

struct State {
    beta_h: Vec<f64>,
    gamma_h: Vec<f64>,
    beta_c: Vec<f64>,
    gamma_c: Vec<f64>,
}

fn gate(cell: &LstmCell<'_>, k: usize, x: &[f64], relevant: bool, s: &State) -> GateParts {
    let n = cell.hidden();
    let f: fn(f64) -> f64 = if k == 3 { f64::tanh } else { sigmoid };
    let f0 = f(0.0);
    let mut parts = GateParts {
        r: Vec::with_capacity(n),
        i: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
    };
    let mut l = [0.0; 3];
    for u in 0..n {
        let wx = dot(cell.wx[k].row(u), x);
        let wh = cell.wh[k].row(u);
        let (mut rel, mut irr) = (dot(wh, &s.beta_h), dot(wh, &s.gamma_h));
        if relevant {
            rel += wx;
        } else {
            irr += wx;
        }
        linearize_into(&[rel, irr, cell.b[k].data()[u]], f, &mut l).expect("three components");
        parts.r.push(l[0]);
        parts.i.push(l[1]);
        parts.b.push(l[2] + f0);
    }
    parts
}

fn direction(cell: &LstmCell<'_>, xs: &[&[f64]], relevant: &[bool]) -> State {
    let n = cell.hidden();
    let mut s = State {
        beta_h: vec![0.0; n],
        gamma_h: vec![0.0; n],
        beta_c: vec![0.0; n],
        gamma_c: vec![0.0; n],
    };
    let mut l = [0.0; 2];
    for (x, &rel) in xs.iter().zip(relevant) {
        let [gi, gf, go, gg] = [0, 1, 2, 3].map(|k| gate(cell, k, x, rel, &s));
        for u in 0..n {
            let f_keep = gf.r[u] + gf.b[u];
            let f_all = f_keep + gf.i[u];
            let c_prev = s.beta_c[u] + s.gamma_c[u];
            let beta_c = f_keep * s.beta_c[u] + gi.r[u] * gg.r[u] + gi.r[u] * gg.b[u] + gi.b[u] * gg.r[u];
            let i_all = gi.r[u] + gi.i[u] + gi.b[u];
            let gamma_c = f_keep * s.gamma_c[u]
                + gf.i[u] * c_prev
                + gi.i[u] * (gg.r[u] + gg.i[u] + gg.b[u])
                + (gi.r[u] + gi.b[u]) * gg.i[u]
                + gi.b[u] * gg.b[u];
            debug_assert!(f_all.is_finite() && i_all.is_finite());
            s.beta_c[u] = beta_c;
            s.gamma_c[u] = gamma_c;
            linearize_into(&[beta_c, gamma_c], f64::tanh, &mut l).expect("two components");
            let o_keep = go.r[u] + go.b[u];
            let o_all = o_keep + go.i[u];
            s.beta_h[u] = o_keep * l[0];
            s.gamma_h[u] = go.i[u] * l[0] + o_all * l[1];
        }
    }
    s
}

/// Decomposition of the concatenated final hidden states. Products of
/// relevant and bias parts go to β; anything touching an irrelevant part, and
/// bias × bias, goes to γ.
pub fn cd_lstm(w: &BilstmWeights<'_>, ids: &[usize], set: &IndexSet) -> Result<Decomposition> {
    if ids.is_empty() {
        return Err(CdError::OutOfBounds { position: 0, len: 0 });
    }
    if let Some(&p) = set.positions().last() {
        if p >= ids.len() {
            return Err(CdError::OutOfBounds {
                position: p,
                len: ids.len(),
            });
        }
    }
    let v = w.embedding.rows();
    if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
        return Err(crate::models::ModelError::Dimension {
            expected: v,
            actual: bad,
        }
        .into());
    }
    let xs: Vec<&[f64]> = ids.iter().map(|&i| w.embedding.row(i)).collect();
    let mask = set.mask(ids.len());
    let fwd = direction(&w.forward, &xs, &mask);
    let rev_x: Vec<&[f64]> = xs.iter().rev().copied().collect();
    let rev_m: Vec<bool> = mask.iter().rev().copied().collect();
    let bwd = direction(&w.backward, &rev_x, &rev_m);
    let mut beta = fwd.beta_h;
    beta.extend(bwd.beta_h);
    let mut gamma = fwd.gamma_h;
    gamma.extend(bwd.gamma_h);
    Ok(Decomposition { beta, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CharVocab, FeatureSchema};
    use crate::models::{bilstm_forward, EncoderConfig, Model};
    use crate::tensor::Rng;

    fn model(seed: u64) -> Model {
        let mut m = Model::init(
            EncoderConfig::Bilstm {
                embed_dim: 5,
                hidden: 4,
            },
            FeatureSchema::builtin("sv").unwrap(),
            CharVocab::from_chars("abcd".chars()),
            &mut Rng::seeded(seed),
        )
        .unwrap();
        let mut rng = Rng::seeded(seed + 7);
        for id in m.params.ids().collect::<Vec<_>>() {
            for v in m.params.get_mut(id).data_mut() {
                *v = rng.normal();
            }
        }
        m
    }

    #[test]
    fn exactness_random_sets() {
        let mut rng = Rng::seeded(2);
        for trial in 0..40 {
            let m = model(trial);
            let ids = m.encode("abdc");
            let w = m.bilstm().unwrap();
            let h = bilstm_forward(&w, &ids).unwrap();
            let set = IndexSet::new((0..ids.len()).filter(|_| rng.bernoulli(0.4)), &ids).unwrap();
            let dec = cd_lstm(&w, &ids, &set).unwrap();
            for (a, b) in dec.total().iter().zip(&h) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn empty_set_zero_beta_and_full_set_exact() {
        let m = model(11);
        let ids = m.encode("cab");
        let w = m.bilstm().unwrap();
        let dec = cd_lstm(&w, &ids, &IndexSet::empty()).unwrap();
        assert!(dec.beta.iter().all(|&b| b == 0.0));
        let all = IndexSet::new(0..ids.len(), &ids).unwrap();
        let full = cd_lstm(&w, &ids, &all).unwrap();
        let h = bilstm_forward(&w, &ids).unwrap();
        for (a, b) in full.total().iter().zip(&h) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn repeated_calls_identical() {
        let m = model(5);
        let ids = m.encode("dd");
        let set = IndexSet::new([1], &ids).unwrap();
        let w = m.bilstm().unwrap();
        assert_eq!(cd_lstm(&w, &ids, &set).unwrap(), cd_lstm(&w, &ids, &set).unwrap());
    }
}
