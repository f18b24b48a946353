use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Adam moments for an ordered list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
    pub step_count: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
}

impl AdamState {
    /// Zeroed moments shaped like `params`, with β1 = 0.9, β2 = 0.999.
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        Self::with_betas(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &[Tensor], lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            beta1,
            beta2,
            eps,
            lr,
            step_count: 0,
            first_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(TensorError::config(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                state.first_moment.len()
            ),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first_moment) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(TensorError::config(
                "adam_step",
                format!("parameter {:?} vs gradient {:?}", p.shape(), g.shape()),
            ));
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![Tensor::scalar(1.0)];
        let g = vec![Tensor::scalar(2.0)];
        let mut s = AdamState::with_betas(&p, 0.1, 0.9, 0.999, 1e-8);
        adam_step(&mut p, &g, &mut s).unwrap();
        let delta = p[0].data()[0] - 1.0;
        assert!(((-delta) / 0.1 - 1.0).abs() < 1e-6, "delta {delta}");
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![Tensor::new(&[2], vec![0.5, -0.5]).unwrap()];
        let g = vec![Tensor::zeros(&[2])];
        let mut s = AdamState::new(&p, 0.1);
        adam_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p[0].data(), &[0.5, -0.5]);
    }

    #[test]
    fn zero_decay_is_sign_sgd() {
        let mut p = vec![Tensor::new(&[2], vec![0.0, 0.0]).unwrap()];
        let g = vec![Tensor::new(&[2], vec![3.0, -0.25]).unwrap()];
        let mut s = AdamState::with_betas(&p, 0.05, 0.0, 0.0, 0.0);
        adam_step(&mut p, &g, &mut s).unwrap();
        adam_step(&mut p, &g, &mut s).unwrap();
        assert!((p[0].data()[0] + 0.1).abs() < 1e-15);
        assert!((p[0].data()[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let mut p = vec![Tensor::zeros(&[2])];
        let g = vec![Tensor::zeros(&[3])];
        let mut s = AdamState::new(&p, 0.1);
        assert!(matches!(adam_step(&mut p, &g, &mut s), Err(TensorError::Config { .. })));
        assert_eq!(s.step_count, 0);
    }
}
