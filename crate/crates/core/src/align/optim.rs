//! Adam with decoupled weight decay over a fixed-order tensor list.

#[allow(unused_imports)] // no_std builds need the trait; std test builds shadow it with inherent methods
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;


use super::TrainConfig;

/// Mutable view of one parameter tensor. Decay applies to weight matrices and
/// embedding tables only; biases, batch-norm parameters, and log τ opt out.
pub struct TensorRef<'a> {
    pub data: &'a mut [f64],
    pub decay: bool,
}

pub struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(cfg: &TrainConfig) -> Self {
        AdamW {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: 1e-8,
            weight_decay: cfg.weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update. `params` and `grads` must be index-aligned and keep the
    /// same order on every call.
    pub fn step(&mut self, params: &mut [TensorRef<'_>], grads: &[&[f64]]) {
        debug_assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (t, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            debug_assert_eq!(p.data.len(), g.len());
            let (m, v) = (&mut self.m[t], &mut self.v[t]);
            let decay = if p.decay { self.weight_decay } else { 0.0 };
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p.data[i] -= self.lr * (mhat / (vhat.sqrt() + self.eps) + decay * p.data[i]);
            }
        }
    }
}
