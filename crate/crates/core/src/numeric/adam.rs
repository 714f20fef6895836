use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::param::ParamBlock;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
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
        AdamConfig { lr, ..Default::default() }
    }
}

/// Bias-corrected Adam over a fixed, ordered list of parameter blocks.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, blocks: &[&ParamBlock]) -> Self {
        let zeros = || blocks.iter().map(|b| Array2::zeros(b.values.raw_dim())).collect();
        Adam {
            config,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, blocks: &mut [&mut ParamBlock]) -> Result<()> {
        if blocks.len() != self.m.len() {
            return Err(Error::shape("adam blocks", self.m.len(), blocks.len()));
        }
        for (b, m) in blocks.iter().zip(&self.m) {
            if b.values.dim() != m.dim() {
                return Err(Error::shape(
                    format!("adam state for `{}`", b.name),
                    format!("{:?}", m.dim()),
                    format!("{:?}", b.values.dim()),
                ));
            }
            if !b.grad.iter().all(|g| g.is_finite()) {
                return Err(Error::NonFiniteGradient(b.name.clone()));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((b, m), v) in blocks.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let ParamBlock { values, grad, .. } = &mut **b;
            Zip::from(values).and(&mut *grad).and(m).and(v).for_each(|x, g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * *g;
                *v = beta2 * *v + (1.0 - beta2) * *g * *g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
                *g = 0.0;
            });
        }
        Ok(())
    }
}
