//! Adam with classic L2 regularization (decay folded into the gradient
//! before the moment updates). Moments are kept in f64 regardless of the
//! parameter scalar type so update order never shows up in results.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Optimizer hyperparameters; the defaults are the training settings
/// used across all experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter-group first and second moments plus the shared step
/// counter. Group order is fixed at construction and must match every
/// `step` call.
#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: OptimizerConfig,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// `sizes` lists the element count of each parameter group.
    pub fn new(cfg: OptimizerConfig, sizes: &[usize]) -> Self {
        Self {
            cfg,
            step: 0,
            first_moment: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            second_moment: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every group: `(param, gradient, is_bias)` in the
    /// construction order. A `None` gradient counts as zero (the group
    /// still decays its moments and, for weights, its L2 term). Bias
    /// groups are exempt from weight decay.
    pub fn step<S: Scalar>(
        &mut self,
        groups: &mut [(&mut Tensor<S>, Option<&Tensor<S>>, bool)],
    ) -> Result<()> {
        if groups.len() != self.first_moment.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer has {} groups, got {}",
                self.first_moment.len(),
                groups.len()
            )));
        }
        let t = self.step + 1;
        let c = self.cfg;
        let bias_corr1 = 1.0 - c.beta1.powi(t as i32);
        let bias_corr2 = 1.0 - c.beta2.powi(t as i32);

        for (gi, (param, grad, is_bias)) in groups.iter_mut().enumerate() {
            let m = &mut self.first_moment[gi];
            let v = &mut self.second_moment[gi];
            if param.len() != m.len() {
                return Err(Error::ShapeMismatch(format!(
                    "group {gi}: parameter has {} elements, optimizer state {}",
                    param.len(),
                    m.len()
                )));
            }
            if let Some(g) = grad {
                if g.len() != m.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "group {gi}: gradient has {} elements, parameter {}",
                        g.len(),
                        m.len()
                    )));
                }
            }
            for j in 0..m.len() {
                let p = param.data()[j].to_f64();
                let mut g = grad.map_or(0.0, |g| g.data()[j].to_f64());
                if !*is_bias {
                    g += c.weight_decay * p;
                }
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                let m_hat = m[j] / bias_corr1;
                let v_hat = v[j] / bias_corr2;
                param.data_mut()[j] = S::from_f64(p - c.lr * m_hat / (v_hat.sqrt() + c.eps));
            }
        }
        self.step = t;
        Ok(())
    }
}
