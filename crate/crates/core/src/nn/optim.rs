use serde::{Deserialize, Serialize};

use super::graph::Gradients;
use super::params::ParamStore;
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are kept per parameter slot; buffers
/// that are not trainable keep empty moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros = |id| {
            if params.is_trainable(id) {
                Tensor::zeros(&params.get(id).shape)
            } else {
                Tensor::zeros(&[0])
            }
        };
        Self {
            config,
            step: 0,
            m: params.ids().map(zeros).collect(),
            v: params.ids().map(zeros).collect(),
        }
    }

    /// One update; parameters without a gradient are treated as having zero gradient.
    pub fn update(&mut self, params: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for id in params.ids().collect::<Vec<_>>() {
            if !params.is_trainable(id) {
                continue;
            }
            let g = grads.get(id);
            let (m, v) = (&mut self.m[id.0].data, &mut self.v[id.0].data);
            let p = &mut params.get_mut(id).data;
            for i in 0..p.len() {
                let gi = g.map_or(0.0, |t| t.data[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}
