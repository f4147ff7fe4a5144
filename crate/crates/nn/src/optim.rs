use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::layers::Param;
use crate::network::Network;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

/// Adam with per-parameter moments keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub moments: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn update(&mut self, net: &mut Network) {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let lr_t = lr * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t));
        let moments = &mut self.moments;
        net.visit_trainable_mut(&mut |name, p: &mut Param| {
            let mo = moments.entry(name.to_string()).or_insert_with(|| Moments {
                m: vec![0.0; p.len()],
                v: vec![0.0; p.len()],
            });
            for i in 0..p.len() {
                let g = f64::from(p.grad[i]);
                let m = beta1 * f64::from(mo.m[i]) + (1.0 - beta1) * g;
                let v = beta2 * f64::from(mo.v[i]) + (1.0 - beta2) * g * g;
                mo.m[i] = m as f32;
                mo.v[i] = v as f32;
                p.value[i] = (f64::from(p.value[i]) - lr_t * m / (v.sqrt() + eps)) as f32;
            }
        });
    }
}

/// Global L2 norm of the trainable gradients.
pub fn grad_norm(net: &mut Network) -> f64 {
    let mut s = 0.0f64;
    net.visit_trainable_mut(&mut |_, p| {
        s += p.grad.iter().map(|&g| f64::from(g) * f64::from(g)).sum::<f64>();
    });
    s.sqrt()
}

/// Rescales the trainable gradients so their global norm is at most
/// `max_norm`. Returns the norms before and after.
pub fn clip_grad_norm(net: &mut Network, max_norm: f64) -> (f64, f64) {
    let before = grad_norm(net);
    if !before.is_finite() || before <= max_norm {
        return (before, before);
    }
    let mut scale = max_norm / before;
    let mut after = before;
    for _ in 0..8 {
        let sc = scale as f32;
        net.visit_trainable_mut(&mut |_, p| p.grad.iter_mut().for_each(|g| *g *= sc));
        after = grad_norm(net);
        if after <= max_norm {
            break;
        }
        scale = max_norm / after * (1.0 - 1e-6);
    }
    (before, after)
}
