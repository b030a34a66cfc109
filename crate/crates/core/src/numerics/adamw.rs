//! AdamW: bias-corrected Adam with decoupled weight decay.

use super::tensor::Tensor;
use crate::error::{contract, CoreError, Result};

#[derive(Clone, Copy, Debug)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamWConfig { lr, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter moment estimates plus the step counter.
pub struct AdamWState {
    pub cfg: AdamWConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamWState {
    /// Moment tensors take the shapes of the parameter list they will update.
    pub fn new(cfg: AdamWConfig, params: &[&Tensor]) -> Self {
        AdamWState {
            cfg,
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the full parameter list.
    ///
    /// The decoupled decay (`lr * wd * theta`) is computed from the
    /// pre-update parameter, separately from the adaptive term. A non-finite
    /// gradient aborts before any state is touched.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(contract("adamw: parameter/gradient count mismatch"));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != params[i].shape() {
                return Err(contract(format!(
                    "adamw: grad shape {:?} vs param shape {:?}",
                    g.shape(),
                    params[i].shape()
                )));
            }
            if !g.is_finite() {
                return Err(CoreError::NonFinite(format!("gradient of parameter {i}")));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for i in 0..params.len() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = grads[i].data();
            let p = params[i].data_mut();
            for j in 0..p.len() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                let theta = p[j];
                p[j] = theta - c.lr * m_hat / (v_hat.sqrt() + c.eps) - c.lr * c.weight_decay * theta;
            }
        }
        Ok(())
    }
}
