//! Adaptive-moment optimizer applied to a merged gradient map.

use std::collections::BTreeMap;

use crate::autodiff::{GradientMap, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are keyed by parameter name;
/// parameters absent from a step's gradient map are left untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T: Scalar> {
    pub config: AdamConfig,
    step: u64,
    m: BTreeMap<String, Tensor<T>>,
    v: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. `lr` maps a parameter name to its learning rate,
    /// so parameter groups can train at different speeds.
    pub fn step(
        &mut self,
        store: &mut ParamStore<T>,
        grads: &GradientMap<T>,
        lr: impl Fn(&str) -> f64,
    ) {
        self.step += 1;
        let b1 = T::lit(self.config.beta1);
        let b2 = T::lit(self.config.beta2);
        let eps = T::lit(self.config.eps);
        let one = T::one();
        let t = self.step as i32;
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);

        for (name, grad) in grads.iter() {
            let Some(param) = store.get_mut(name) else {
                continue;
            };
            let m = self
                .m
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(grad.shape().to_vec()));
            let v = self
                .v
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(grad.shape().to_vec()));
            let rate = T::lit(lr(name));
            let pd = param.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let g = grad.data()[i];
                md[i] = b1 * md[i] + (one - b1) * g;
                vd[i] = b2 * vd[i] + (one - b2) * g * g;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    pub fn moments(&self) -> (&BTreeMap<String, Tensor<T>>, &BTreeMap<String, Tensor<T>>) {
        (&self.m, &self.v)
    }

    /// Restore optimizer state from a checkpoint.
    pub fn restore(
        config: AdamConfig,
        step: u64,
        m: BTreeMap<String, Tensor<T>>,
        v: BTreeMap<String, Tensor<T>>,
    ) -> Self {
        Adam { config, step, m, v }
    }
}
