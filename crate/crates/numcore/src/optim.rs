//! Gradient-descent optimizer with decoupled weight decay.

use std::collections::BTreeMap;

use crate::scalar::Scalar;
use crate::store::ParamStore;
use crate::tensor::{NumError, Tensor};

/// Adam moments with the weight-decay term applied to the parameter
/// directly rather than through the gradient. Rank-1 parameters (biases,
/// layer-norm gains) are not decayed.
pub struct AdamW<T: Scalar> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub weight_decay: T,
    step: u64,
    m: BTreeMap<String, Tensor<T>>,
    v: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr: T::from_f64_lossy(lr),
            beta1: T::from_f64_lossy(0.9),
            beta2: T::from_f64_lossy(0.999),
            eps: T::from_f64_lossy(1e-8),
            weight_decay: T::from_f64_lossy(weight_decay),
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Apply one update from the store's accumulated gradients, then clear them.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<(), NumError> {
        self.step += 1;
        let t = T::from_f64_lossy(self.step as f64);
        let bc1 = T::one() - self.beta1.powf(t);
        let bc2 = T::one() - self.beta2.powf(t);
        let one = T::one();
        for (name, entry) in store.iter_mut() {
            let Some(grad) = entry.grad.take() else {
                continue;
            };
            let m = self
                .m
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(entry.value.shape()));
            let v = self
                .v
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(entry.value.shape()));
            let decay = if entry.value.rank() > 1 {
                self.weight_decay
            } else {
                T::zero()
            };
            for k in 0..entry.value.len() {
                let g = grad.data()[k];
                let mk = self.beta1 * m.data()[k] + (one - self.beta1) * g;
                let vk = self.beta2 * v.data()[k] + (one - self.beta2) * g * g;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let mhat = mk / bc1;
                let vhat = vk / bc2;
                let p = entry.value.data()[k];
                entry.value.data_mut()[k] =
                    p - self.lr * decay * p - self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
