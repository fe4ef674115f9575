use crate::error::{Error, Result};
use crate::nn::model::Model;
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Momentum SGD with L2 weight decay.
///
/// `v ← μ·v + (g + λ·p)`, `p ← p − lr·v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    /// Applies one update in place. Non-finite gradients leave the model untouched.
    pub fn step(&mut self, model: &mut Model<T>, grads: &[Tensor<T>], lr: f64) -> Result<()> {
        let params = model.params_mut();
        if grads.len() != params.len()
            || grads
                .iter()
                .zip(params.iter())
                .any(|(g, p)| g.shape() != p.shape())
        {
            return Err(Error::RejectedInput(
                "gradient shapes do not match parameters".into(),
            ));
        }
        if let Some(i) = grads.iter().position(|g| !g.all_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter {i}")));
        }
        if self.velocity.is_empty() {
            self.velocity = params
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect();
        }
        let (mu, wd, lr) = (T::of(self.momentum), T::of(self.weight_decay), T::of(lr));
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vv = mu * *vv + gv + wd * *pv;
                *pv -= lr * *vv;
            }
        }
        Ok(())
    }
}

/// Learning rate with ×0.1 steps at 50% and 75% of training.
pub fn step_decay_lr(base: f64, epoch: usize, epochs: usize) -> f64 {
    let mut lr = base;
    if 2 * epoch >= epochs {
        lr *= 0.1;
    }
    if 4 * epoch >= 3 * epochs {
        lr *= 0.1;
    }
    lr
}
