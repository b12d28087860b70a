//! Adam with bias-corrected moment estimates.

use crate::error::{CoreError, Result};
use crate::matrix::Matrix;
use crate::models::params::ParamSet;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &ParamSet, cfg: AdamConfig) -> Self {
        let zeros: Vec<Matrix> = params
            .iter()
            .map(|(_, p)| Matrix::zeros(p.rows(), p.cols()))
            .collect();
        AdamState {
            cfg,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the whole parameter set. `grads` must be indexed by
    /// parameter slot (see [`ParamSet::gather`]).
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Matrix]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(CoreError::contract(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.cfg.beta1.powf(t);
        let c2 = 1.0 - self.cfg.beta2.powf(t);
        for slot in 0..params.len() {
            let id = crate::models::params::ParamId(slot);
            let g = &grads[slot];
            if g.shape() != params.value(id).shape() {
                return Err(CoreError::contract(format!(
                    "gradient shape {:?} does not match parameter {} {:?}",
                    g.shape(),
                    params.name(id),
                    params.value(id).shape()
                )));
            }
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            let mut updated = params.value(id).clone();
            let data = updated.data_mut();
            for (((p, gi), mi), vi) in data
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.cfg.beta1 * *mi + (1.0 - self.cfg.beta1) * gi;
                *vi = self.cfg.beta2 * *vi + (1.0 - self.cfg.beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
            params.set_value(id, updated)?;
        }
        Ok(())
    }
}
