use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Gradients, Matrix, ParamStore, TensorError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    /// Initial learning rate.
    pub lr: f64,
    /// Multiplicative per-epoch learning-rate factor.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            decay: 0.95,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.decay.powi(epoch as i32)
    }
}

/// Bias-corrected Adam with per-parameter moment accumulators.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Matrix, Matrix)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    /// Applies one update using `grads` (consumed) at the learning rate
    /// scheduled for `epoch`.
    pub fn step(&mut self, params: &mut ParamStore, grads: Gradients, epoch: usize) -> Result<(), TensorError> {
        if grads.is_empty() {
            return Err(TensorError::MissingGradients);
        }
        self.step += 1;
        let t = self.step as i32;
        let lr = self.cfg.lr_at(epoch);
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);

        for (name, g) in grads.iter() {
            let p = params
                .get_mut(name)
                .ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
            if p.shape() != g.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (Matrix::zeros(g.rows(), g.cols()), Matrix::zeros(g.rows(), g.cols())));
            for (((pv, mv), vv), &gv) in p
                .as_mut_slice()
                .iter_mut()
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
                .zip(g.as_slice())
            {
                *mv = b1 * *mv + (1.0 - b1) * gv;
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *pv -= lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }
}
