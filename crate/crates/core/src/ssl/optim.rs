use serde::{Deserialize, Serialize};

use super::mlp::Mlp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam over a fixed list of networks; moment buffers mirror their shapes.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Mlp<f32>>,
    second: Vec<Mlp<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig, nets: &[&Mlp<f32>]) -> Self {
        Self {
            config,
            step: 0,
            first: nets.iter().map(|n| n.zeros_like()).collect(),
            second: nets.iter().map(|n| n.zeros_like()).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, nets: &mut [&mut Mlp<f32>], grads: &[&Mlp<f32>]) {
        assert_eq!(nets.len(), self.first.len());
        assert_eq!(grads.len(), self.first.len());
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
        let lr_t = (c.lr * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t))) as f32;
        let eps_t = (c.eps * (1.0 - c.beta2.powi(t)).sqrt()) as f32;
        for (k, net) in nets.iter_mut().enumerate() {
            let params = net.param_slices_mut();
            let grads = grads[k].param_slices();
            let first = self.first[k].param_slices_mut();
            let second = self.second[k].param_slices_mut();
            for (((p, g), m), v) in params.into_iter().zip(grads).zip(first).zip(second) {
                for i in 0..p.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    p[i] -= lr_t * m[i] / (v[i].sqrt() + eps_t);
                }
            }
        }
    }
}
