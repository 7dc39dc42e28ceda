//! Adam optimizer with bias-corrected moment estimates.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

pub const DEFAULT_LR: f64 = 0.001;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-7;

/// Per-model optimizer state: step counter and first/second moment tensors
/// shaped like the parameters.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub t: u64,
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(param_shapes: &[Vec<usize>]) -> Self {
        AdamState {
            t: 0,
            m: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: param_shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            lr: F::from(DEFAULT_LR).unwrap(),
            beta1: F::from(DEFAULT_BETA1).unwrap(),
            beta2: F::from(DEFAULT_BETA2).unwrap(),
            epsilon: F::from(DEFAULT_EPSILON).unwrap(),
        }
    }

    pub fn with_lr(mut self, lr: F) -> Self {
        self.lr = lr;
        self
    }
}

/// One Adam update over a parameter list and matching gradient list.
pub fn adam_step<F: Scalar>(
    params: &mut [&mut Tensor<F>],
    grads: &[Tensor<F>],
    state: &mut AdamState<F>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moment tensors",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params[i].shape() {
            return Err(Error::Shape(format!(
                "adam: grad {:?} vs param {:?}",
                g.shape(),
                params[i].shape()
            )));
        }
        g.check_finite("adam gradient")?;
    }
    state.t += 1;
    let one = F::one();
    let b1 = state.beta1;
    let b2 = state.beta2;
    let t_i32 = state.t.min(i32::MAX as u64) as i32;
    let bc1 = one - b1.powi(t_i32);
    let bc2 = one - b2.powi(t_i32);
    for ((param, grad), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let pd = param.data_mut();
        let md = m.data_mut();
        let vd = v.data_mut();
        for ((p, &g), (mi, vi)) in pd
            .iter_mut()
            .zip(grad.data())
            .zip(md.iter_mut().zip(vd.iter_mut()))
        {
            *mi = b1 * *mi + (one - b1) * g;
            *vi = b2 * *vi + (one - b2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *p = *p - state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}
