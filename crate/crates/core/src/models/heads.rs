use super::{ModelError, Result};
use crate::tensor::{dot, Tensor};

/// Multinomial logistic regression for one feature class: `weight` is
/// `[C, d₂]` (row `j` scores label `j`), `bias` is `[C]`.
#[derive(Debug, Clone, Copy)]
pub struct Head<'a> {
    pub class: &'a str,
    pub weight: &'a Tensor,
    pub bias: &'a Tensor,
}

impl Head<'_> {
    pub fn num_labels(&self) -> usize {
        self.weight.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.row_len()
    }

    pub fn logits(&self, repr: &[f64]) -> Result<Vec<f64>> {
        if repr.len() != self.input_dim() {
            return Err(ModelError::Dimension {
                expected: self.input_dim(),
                actual: repr.len(),
            });
        }
        Ok((0..self.num_labels())
            .map(|j| dot(self.weight.row(j), repr) + self.bias.data()[j])
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct ClassifierHeads<'a> {
    pub heads: Vec<Head<'a>>,
}

impl<'a> ClassifierHeads<'a> {
    pub fn get(&self, class: &str) -> Option<&Head<'a>> {
        self.heads.iter().find(|h| h.class == class)
    }
}

pub fn head_logits(heads: &ClassifierHeads<'_>, repr: &[f64]) -> Result<Vec<Vec<f64>>> {
    heads.heads.iter().map(|h| h.logits(repr)).collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

/// Softmax distribution per head.
pub fn classify(heads: &ClassifierHeads<'_>, repr: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(head_logits(heads, repr)?.iter().map(|z| softmax(z)).collect())
}

/// `Σ_heads −log p(gold)` from per-head logits.
pub fn joint_loss(logits: &[Vec<f64>], gold: &[usize]) -> Result<f64> {
    if logits.len() != gold.len() {
        return Err(ModelError::Dimension {
            expected: logits.len(),
            actual: gold.len(),
        });
    }
    let mut total = 0.0;
    for (z, &y) in logits.iter().zip(gold) {
        if y >= z.len() {
            return Err(ModelError::Dimension {
                expected: z.len(),
                actual: y,
            });
        }
        total += log_sum_exp(z) - z[y];
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::argmax;
    use crate::tensor::Rng;
    use proptest::prelude::*;

    fn head<'a>(w: &'a Tensor, b: &'a Tensor) -> ClassifierHeads<'a> {
        ClassifierHeads {
            heads: vec![Head {
                class: "X",
                weight: w,
                bias: b,
            }],
        }
    }

    #[test]
    fn zero_logits_are_uniform() {
        let p = softmax(&[0.0, 0.0, 0.0]);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ln2_shift_gives_one_third_two_thirds() {
        let p = softmax(&[1.0, 1.0 + 2f64.ln()]);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_uniform_losses() {
        assert!(joint_loss(&[vec![0.0, -1e4], vec![-1e4, 0.0]], &[0, 1]).unwrap() < 1e-12);
        let uniform = joint_loss(&[vec![0.0; 3], vec![0.0; 5]], &[1, 4]).unwrap();
        assert!((uniform - (3f64.ln() + 5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn hand_cross_entropy() {
        let l = joint_loss(&[vec![1.0, 2.0], vec![0.5, -0.5, 0.0]], &[0, 2]).unwrap();
        let h1 = -(1f64.exp() / (1f64.exp() + 2f64.exp())).ln();
        let h2 = -(1.0 / (0.5f64.exp() + (-0.5f64).exp() + 1.0)).ln();
        assert!((l - (h1 + h2)).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let w = Tensor::zeros(&[3, 4]);
        let b = Tensor::zeros(&[3]);
        assert!(classify(&head(&w, &b), &[0.0; 5]).is_err());
        assert!(joint_loss(&[vec![0.0; 2]], &[2]).is_err());
    }

    #[test]
    fn random_head_argmax_agrees() {
        let mut rng = Rng::seeded(12);
        let w = Tensor::new(vec![4, 6], (0..24).map(|_| rng.normal()).collect()).unwrap();
        let b = Tensor::new(vec![4], (0..4).map(|_| rng.normal()).collect()).unwrap();
        let heads = head(&w, &b);
        for _ in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
            let p = classify(&heads, &x).unwrap();
            let z = head_logits(&heads, &x).unwrap();
            assert_eq!(argmax(&p[0]), argmax(&z[0]));
        }
    }

    proptest! {
        #[test]
        fn distributions_sum_to_one(z in prop::collection::vec(-50.0f64..50.0, 1..12), shift in -100.0f64..100.0) {
            let p = softmax(&z);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mut sorted = z.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            prop_assume!(sorted.len() == 1 || sorted[0] - sorted[1] > 1e-6);
            let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
            prop_assert_eq!(argmax(&softmax(&shifted)), argmax(&p));
        }
    }
}
