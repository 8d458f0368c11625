#[allow(unused_imports)] // unused when a dev-dependency links std
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;


use super::model::{Gradients, UNet};
use super::tensor::Scalar;
use crate::{Error, Result};

/// Adam with bias correction. Moments are kept per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(model: &UNet<T>, learning_rate: f64) -> Self {
        Self::for_shapes(model.params().iter().map(|p| p.values.len()), learning_rate)
    }

    pub fn for_shapes(lens: impl IntoIterator<Item = usize>, learning_rate: f64) -> Self {
        let lens: Vec<usize> = lens.into_iter().collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            step: 0,
            first_moment: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            second_moment: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    /// One update of `values` (tensor by tensor) against `grads`.
    pub fn update(&mut self, values: &mut [&mut [T]], grads: &Gradients<T>) -> Result<()> {
        if values.len() != grads.len() || values.len() != self.first_moment.len() {
            return Err(Error::ShapeMismatch("gradient count does not match parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from(self.beta1).unwrap();
        let b2 = T::from(self.beta2).unwrap();
        let c1 = T::from(1.0 - self.beta1.powi(t)).unwrap();
        let c2 = T::from(1.0 - self.beta2.powi(t)).unwrap();
        let lr = T::from(self.learning_rate).unwrap();
        let eps = T::from(self.epsilon).unwrap();
        let one = T::one();
        for (k, (p, g)) in values.iter_mut().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(Error::ShapeMismatch("gradient tensor length differs".into()));
            }
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] = p[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Apply one Adam step to every parameter of `model`.
pub fn adam_step<T: Scalar>(model: &mut UNet<T>, grads: &Gradients<T>, state: &mut AdamState<T>) -> Result<()> {
    let mut views: Vec<&mut [T]> = model.params_mut().iter_mut().map(|p| p.values.as_mut_slice()).collect();
    state.update(&mut views, grads)
}
