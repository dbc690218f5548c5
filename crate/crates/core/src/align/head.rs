//! Projection head: Linear → BatchNorm → ReLU → Dropout → Linear.
//!
//! Training mode normalizes with batch statistics and updates running
//! estimates; inference uses the frozen running statistics and skips dropout,
//! so inference is deterministic per sample.

#[allow(unused_imports)] // no_std builds need the trait; std test builds shadow it with inherent methods
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::mat::Mat;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub in_dim: usize,
    pub hidden: usize,
    pub out_dim: usize,
    /// hidden × in_dim, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub run_mean: Vec<f64>,
    pub run_var: Vec<f64>,
    /// out_dim × hidden, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

pub struct HeadCache {
    x: Mat,
    normalized: Mat,
    invstd: Vec<f64>,
    relu_mask: Vec<bool>,
    /// Per-element dropout multiplier (0 or 1/keep); empty when dropout is 0.
    drop_scale: Vec<f64>,
    /// ReLU output after dropout, the input of the second linear map.
    dropped: Mat,
}

#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ProjectionHead {
    pub fn init(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        ProjectionHead {
            in_dim,
            hidden,
            out_dim,
            w1: uniform_fan_in(hidden * in_dim, in_dim, rng),
            b1: vec![0.0; hidden],
            gamma: vec![1.0; hidden],
            beta: vec![0.0; hidden],
            run_mean: vec![0.0; hidden],
            run_var: vec![1.0; hidden],
            w2: uniform_fan_in(out_dim * hidden, hidden, rng),
            b2: vec![0.0; out_dim],
        }
    }

    pub fn zero_grads(&self) -> HeadGrads {
        HeadGrads {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            gamma: vec![0.0; self.gamma.len()],
            beta: vec![0.0; self.beta.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        }
    }

    /// Single-sample inference with frozen statistics, no dropout.
    pub fn forward_infer(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut r = vec![0.0; self.hidden];
        for h in 0..self.hidden {
            let row = &self.w1[h * self.in_dim..(h + 1) * self.in_dim];
            let l1: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[h];
            let n = (l1 - self.run_mean[h]) / (self.run_var[h] + BN_EPS).sqrt();
            r[h] = (self.gamma[h] * n + self.beta[h]).max(0.0);
        }
        let mut y = vec![0.0; self.out_dim];
        for o in 0..self.out_dim {
            let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
            y[o] = row.iter().zip(&r).map(|(w, v)| w * v).sum::<f64>() + self.b2[o];
        }
        y
    }

    /// Batch forward with batch-statistics normalization. Updates the running
    /// estimates in place and returns the activation cache for [`Self::backward`].
    pub fn forward_train(
        &mut self,
        x: Mat,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> (Mat, HeadCache) {
        let m = x.rows;
        debug_assert!(m >= 2, "batch statistics need at least two samples");
        debug_assert_eq!(x.cols, self.in_dim);

        let mut l1 = Mat::zeros(m, self.hidden);
        for i in 0..m {
            let xi = x.row(i);
            let out = l1.row_mut(i);
            for h in 0..self.hidden {
                let row = &self.w1[h * self.in_dim..(h + 1) * self.in_dim];
                out[h] = row.iter().zip(xi).map(|(w, v)| w * v).sum::<f64>() + self.b1[h];
            }
        }

        let mut invstd = vec![0.0; self.hidden];
        let mut normalized = Mat::zeros(m, self.hidden);
        for h in 0..self.hidden {
            let mean = (0..m).map(|i| l1.row(i)[h]).sum::<f64>() / m as f64;
            let var = (0..m).map(|i| (l1.row(i)[h] - mean).powi(2)).sum::<f64>() / m as f64;
            let inv = 1.0 / (var + BN_EPS).sqrt();
            invstd[h] = inv;
            for i in 0..m {
                normalized.row_mut(i)[h] = (l1.row(i)[h] - mean) * inv;
            }
            self.run_mean[h] = (1.0 - BN_MOMENTUM) * self.run_mean[h] + BN_MOMENTUM * mean;
            self.run_var[h] = (1.0 - BN_MOMENTUM) * self.run_var[h] + BN_MOMENTUM * var;
        }

        let mut relu_mask = vec![false; m * self.hidden];
        let mut dropped = Mat::zeros(m, self.hidden);
        let mut drop_scale = Vec::new();
        let keep = 1.0 - dropout;
        if dropout > 0.0 {
            drop_scale = vec![0.0; m * self.hidden];
        }
        for i in 0..m {
            for h in 0..self.hidden {
                let a = self.gamma[h] * normalized.row(i)[h] + self.beta[h];
                let active = a > 0.0;
                relu_mask[i * self.hidden + h] = active;
                let mut v = if active { a } else { 0.0 };
                if dropout > 0.0 {
                    let scale = if rng.random::<f64>() < dropout {
                        0.0
                    } else {
                        1.0 / keep
                    };
                    drop_scale[i * self.hidden + h] = scale;
                    v *= scale;
                }
                dropped.row_mut(i)[h] = v;
            }
        }

        let mut y = Mat::zeros(m, self.out_dim);
        for i in 0..m {
            let r = dropped.row(i);
            let out = y.row_mut(i);
            for o in 0..self.out_dim {
                let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
                out[o] = row.iter().zip(r).map(|(w, v)| w * v).sum::<f64>() + self.b2[o];
            }
        }

        (
            y,
            HeadCache {
                x,
                normalized,
                invstd,
                relu_mask,
                drop_scale,
                dropped,
            },
        )
    }

    /// Backward pass for a `forward_train` batch. Accumulates parameter
    /// gradients into `grads` and returns the gradient w.r.t. the input.
    pub fn backward(&self, cache: &HeadCache, dy: &Mat, grads: &mut HeadGrads) -> Mat {
        let m = dy.rows;
        debug_assert_eq!(dy.cols, self.out_dim);

        // Second linear map.
        let mut d_drop = Mat::zeros(m, self.hidden);
        for i in 0..m {
            let dyi = dy.row(i);
            let r = cache.dropped.row(i);
            let dd = d_drop.row_mut(i);
            for o in 0..self.out_dim {
                let g = dyi[o];
                grads.b2[o] += g;
                let wrow = &self.w2[o * self.hidden..(o + 1) * self.hidden];
                let grow = &mut grads.w2[o * self.hidden..(o + 1) * self.hidden];
                for h in 0..self.hidden {
                    grow[h] += g * r[h];
                    dd[h] += g * wrow[h];
                }
            }
        }

        // Dropout and ReLU.
        let mut d_affine = d_drop;
        for i in 0..m {
            for h in 0..self.hidden {
                let flat = i * self.hidden + h;
                let mut g = d_affine.row(i)[h];
                if !cache.drop_scale.is_empty() {
                    g *= cache.drop_scale[flat];
                }
                if !cache.relu_mask[flat] {
                    g = 0.0;
                }
                d_affine.row_mut(i)[h] = g;
            }
        }

        // BatchNorm affine + normalization.
        let mut d_l1 = Mat::zeros(m, self.hidden);
        for h in 0..self.hidden {
            let mut sum_dn = 0.0;
            let mut sum_dn_n = 0.0;
            for i in 0..m {
                let da = d_affine.row(i)[h];
                let n = cache.normalized.row(i)[h];
                grads.gamma[h] += da * n;
                grads.beta[h] += da;
                let dn = da * self.gamma[h];
                sum_dn += dn;
                sum_dn_n += dn * n;
            }
            let scale = cache.invstd[h] / m as f64;
            for i in 0..m {
                let dn = d_affine.row(i)[h] * self.gamma[h];
                let n = cache.normalized.row(i)[h];
                d_l1.row_mut(i)[h] = scale * (m as f64 * dn - sum_dn - n * sum_dn_n);
            }
        }

        // First linear map.
        let mut dx = Mat::zeros(m, self.in_dim);
        for i in 0..m {
            let xi = cache.x.row(i);
            let dli = d_l1.row(i);
            let dxi = dx.row_mut(i);
            for h in 0..self.hidden {
                let g = dli[h];
                grads.b1[h] += g;
                let wrow = &self.w1[h * self.in_dim..(h + 1) * self.in_dim];
                let grow = &mut grads.w1[h * self.in_dim..(h + 1) * self.in_dim];
                for j in 0..self.in_dim {
                    grow[j] += g * xi[j];
                    dxi[j] += g * wrow[j];
                }
            }
        }
        dx
    }
}

pub fn uniform_fan_in(len: usize, fan_in: usize, rng: &mut impl Rng) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}
