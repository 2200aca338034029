//! Adam with linear warmup and no weight decay.

use super::{EncoderParams, Gradients};

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub warmup_ratio: f64,
    pub total_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64, warmup_ratio: f64, total_steps: usize) -> Adam {
        Adam {
            lr,
            warmup_ratio,
            total_steps,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// Linear warmup to `lr` over `warmup_ratio * total_steps`, constant
    /// afterwards. At the exact warmup boundary the rate equals `lr`.
    pub fn effective_lr(&self, step: usize) -> f64 {
        let warmup = self.warmup_ratio * self.total_steps as f64;
        if warmup < 1.0 {
            return self.lr;
        }
        self.lr * (step as f64 / warmup).min(1.0)
    }

    /// One optimizer step; `step` is 1-based.
    pub fn step(&mut self, params: &mut EncoderParams, grads: &Gradients, step: usize) {
        assert!(step >= 1, "step numbering is 1-based");
        let lr = self.effective_lr(step);
        let bc1 = 1.0 - self.beta1.powi(step as i32);
        let bc2 = 1.0 - self.beta2.powi(step as i32);
        let mut offset = 0;
        let grad_tensors = grads.tensors();
        for (tensor, grad) in params.tensors_mut().into_iter().zip(grad_tensors) {
            for (i, (p, &g)) in tensor.iter_mut().zip(grad.iter()).enumerate() {
                let j = offset + i;
                self.m[j] = self.beta1 * self.m[j] + (1.0 - self.beta1) * g;
                self.v[j] = self.beta2 * self.v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = self.m[j] / bc1;
                let v_hat = self.v[j] / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            offset += grad.len();
        }
    }
}
