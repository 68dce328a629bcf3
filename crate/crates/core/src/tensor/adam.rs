use super::{ParamStore, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(params: &mut ParamStore, grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if cfg.lr.is_nan() || cfg.lr < 0.0 {
        return Err(TensorError::InvalidArgument(format!("learning rate {}", cfg.lr)));
    }
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(TensorError::InvalidArgument(format!(
            "{} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), (m, v)) in params.tensors().iter().zip(grads).zip(state.m.iter().zip(&state.v)) {
        if p.shape() != g.shape() || p.shape() != m.shape() || p.shape() != v.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pi -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Tensor::vector(vec![value, -value]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut params = single(0.5);
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig::default();
        let before = params.clone();
        adam_step(&mut params, &[Tensor::zeros(&[2])], &mut state, &cfg).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step, 1);

        let mut state = AdamState::new(&params);
        state.m[0].data_mut().copy_from_slice(&[1.0, 2.0]);
        state.v[0].data_mut().copy_from_slice(&[4.0, 8.0]);
        adam_step(&mut params, &[Tensor::zeros(&[2])], &mut state, &cfg).unwrap();
        assert_eq!(state.m[0].data(), &[0.9, 1.8]);
        assert_eq!(state.v[0].data(), &[4.0 * 0.999, 8.0 * 0.999]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut params = single(0.0);
        let mut state = AdamState::new(&params);
        let cfg = AdamConfig::default();
        let g = Tensor::vector(vec![3.0, -0.02]).unwrap();
        adam_step(&mut params, &[g], &mut state, &cfg).unwrap();
        // At t = 1: m_hat = g, v_hat = g², update = -lr·g/(|g| + eps).
        for (&p, sign) in params.get(crate::tensor::ParamId(0)).data().iter().zip([1.0, -1.0]) {
            assert!((p + cfg.lr * sign).abs() < 1e-9);
        }
    }

    #[test]
    fn two_steps_match_scripted_recurrence() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut params = single(1.0);
        let mut state = AdamState::new(&params);
        let gs = [0.3, -0.7];
        for &g in &gs {
            let grad = Tensor::vector(vec![g, g]).unwrap();
            adam_step(&mut params, &[grad], &mut state, &cfg).unwrap();
        }
        let (mut p, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for (t, &g) in gs.iter().enumerate() {
            let t = (t + 1) as i32;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            p -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert_eq!(params.get(crate::tensor::ParamId(0)).data()[0], p);
        assert_eq!(state.step, 2);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = single(1.0);
        let mut state = AdamState::new(&params);
        let bad = Tensor::zeros(&[3]);
        assert!(adam_step(&mut params, &[bad], &mut state, &AdamConfig::default()).is_err());
    }
}
