use super::matrix::{GradPair, Scalar};
use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment accumulators, one buffer per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T: Scalar> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, param_lens: impl IntoIterator<Item = usize>) -> Self {
        let lens: Vec<usize> = param_lens.into_iter().collect();
        AdamState {
            config,
            step: 0,
            first: lens.iter().map(|&n| vec![T::ZERO; n]).collect(),
            second: lens.iter().map(|&n| vec![T::ZERO; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update at the configured learning rate.
    pub fn update(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        let lr = self.config.lr;
        self.update_with_lr(params, grads, lr)
    }

    /// One bias-corrected update with an explicit (scheduled) learning rate.
    pub fn update_with_lr(&mut self, params: &mut [&mut [T]], grads: &[&[T]], lr: f64) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(Error::dim(
                "adam_step",
                format!(
                    "{} params / {} grads for {} accumulators",
                    params.len(),
                    grads.len(),
                    self.first.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[i].len() || g.len() != p.len() {
                return Err(Error::dim(
                    "adam_step",
                    format!(
                        "tensor {i}: param {} grad {} state {}",
                        p.len(),
                        g.len(),
                        self.first[i].len()
                    ),
                ));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = T::from_f64(1.0 - c.beta1.powi(t));
        let bc2 = T::from_f64(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (ob1, ob2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let (lr, eps) = (T::from_f64(lr), T::from_f64(c.eps));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + ob1 * gj;
                v[j] = b2 * v[j] + ob2 * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam update to each `value` from its `grad`.
pub fn adam_step<T: Scalar>(pairs: &mut [GradPair<T>], state: &mut AdamState<T>) -> Result<()> {
    let (mut values, grads): (Vec<&mut [T]>, Vec<&[T]>) = pairs
        .iter_mut()
        .map(|p| (p.value.as_mut_slice(), p.grad.as_slice()))
        .unzip();
    state.update(&mut values, &grads)
}
