//! Classical momentum SGD.

use crate::error::{Error, Result};
use crate::param::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub velocity: Vec<f64>,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptState {
    pub fn new(param: &Tensor, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            velocity: vec![0.0; param.len()],
            lr,
            momentum,
            weight_decay,
        }
    }
}

/// `v ← μ·v − lr·(g + wd·θ)`, `θ ← θ + v`, then clears the gradient.
pub fn sgd_momentum_step(param: &mut Tensor, state: &mut OptState) -> Result<()> {
    let grad = param
        .grad
        .take()
        .ok_or_else(|| Error::Usage("optimizer step on a tensor without gradient".into()))?;
    if state.velocity.len() != param.len() {
        return Err(Error::dim("sgd_momentum_step", param.shape(), &[state.velocity.len()]));
    }
    let (lr, mu, wd) = (state.lr, state.momentum, state.weight_decay);
    for ((theta, v), g) in param.data_mut().iter_mut().zip(&mut state.velocity).zip(&grad) {
        *v = mu * *v - lr * (g + wd * *theta);
        *theta += *v;
    }
    Ok(())
}

/// One [`OptState`] per tensor of a [`ParamSet`], in visiting order.
#[derive(Debug, Clone)]
pub struct Momentum {
    states: Vec<OptState>,
}

impl Momentum {
    pub fn new<P: ParamSet + ?Sized>(params: &P, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        let mut states = Vec::new();
        params.visit(&mut |_, t| states.push(OptState::new(t, lr, momentum, weight_decay)));
        Self { states }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.states.iter_mut().for_each(|s| s.lr = lr);
    }

    pub fn lr(&self) -> f64 {
        self.states.first().map_or(0.0, |s| s.lr)
    }

    /// Steps every tensor. Tensors without a gradient are treated as having
    /// a zero gradient, so momentum and weight decay still apply.
    pub fn step<P: ParamSet + ?Sized>(&mut self, params: &mut P) -> Result<()> {
        let mut states = self.states.iter_mut();
        let mut result = Ok(());
        params.visit_mut(&mut |_, t| {
            if result.is_err() {
                return;
            }
            if t.grad.is_none() {
                t.grad = Some(vec![0.0; t.len()]);
            }
            result = match states.next() {
                Some(s) => sgd_momentum_step(t, s),
                None => Err(Error::Usage("optimizer built for a different parameter set".into())),
            };
        });
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param_with_grad(theta: f64, g: f64) -> Tensor {
        let mut t = Tensor::row_vector(&[theta]);
        t.grad = Some(vec![g]);
        t
    }

    #[test]
    fn first_step_is_plain_sgd() {
        let mut p = param_with_grad(1.0, 1.0);
        let mut s = OptState::new(&p, 0.01, 0.9, 0.0);
        sgd_momentum_step(&mut p, &mut s).unwrap();
        assert!((p.data()[0] - 0.99).abs() < 1e-15);
        assert!(p.grad.is_none());
    }

    #[test]
    fn zero_gradient_no_motion() {
        let mut p = param_with_grad(0.5, 0.0);
        let mut s = OptState::new(&p, 0.01, 0.9, 0.0);
        sgd_momentum_step(&mut p, &mut s).unwrap();
        assert_eq!(p.data()[0], 0.5);
    }

    #[test]
    fn two_steps_constant_gradient() {
        let mut p = param_with_grad(0.0, 1.0);
        let mut s = OptState::new(&p, 0.01, 0.9, 0.0);
        sgd_momentum_step(&mut p, &mut s).unwrap();
        p.grad = Some(vec![1.0]);
        sgd_momentum_step(&mut p, &mut s).unwrap();
        assert!((p.data()[0] + (0.01 + 0.019)).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_pulls_toward_zero() {
        let mut p = param_with_grad(2.0, 0.0);
        let mut s = OptState::new(&p, 0.1, 0.0, 0.5);
        sgd_momentum_step(&mut p, &mut s).unwrap();
        assert!((p.data()[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn missing_grad_is_usage_error() {
        let mut p = Tensor::row_vector(&[1.0]);
        let mut s = OptState::new(&p, 0.01, 0.9, 0.0);
        assert!(matches!(sgd_momentum_step(&mut p, &mut s), Err(Error::Usage(_))));
    }

    #[test]
    fn velocity_shape_mismatch_rejected() {
        let mut p = param_with_grad(1.0, 1.0);
        let mut s = OptState::new(&Tensor::zeros(&[1, 2]), 0.01, 0.9, 0.0);
        assert!(matches!(sgd_momentum_step(&mut p, &mut s), Err(Error::Dimension { .. })));
    }
}
