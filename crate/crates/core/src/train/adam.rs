use std::collections::BTreeMap;

use mmnas_autodiff::{Gradients, Param, ParamId};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Number of updates applied so far.
    pub steps: u64,
    pub moments: BTreeMap<ParamId, Moments>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Applies one update to every parameter in `params` that received a
    /// gradient. Parameters without a gradient are left untouched.
    /// `group` and `global_step` only label diagnostics.
    pub fn step(&mut self, params: Vec<&mut Param>, grads: &Gradients, group: &str, global_step: usize) -> Result<()> {
        for p in &params {
            if let Some(g) = grads.param(p.id()) {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(CoreError::NonFinite {
                        step: global_step,
                        group: group.to_string(),
                        detail: format!("gradient of `{}`", p.name()),
                    });
                }
            }
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for p in params {
            let Some(g) = grads.param(p.id()) else { continue };
            let m = self.moments.entry(p.id()).or_insert_with(|| Moments {
                first: vec![0.0; g.len()],
                second: vec![0.0; g.len()],
            });
            let values = p.tensor_mut().data_mut();
            for (i, gi) in g.iter().enumerate() {
                m.first[i] = self.beta1 * m.first[i] + (1.0 - self.beta1) * gi;
                m.second[i] = self.beta2 * m.second[i] + (1.0 - self.beta2) * gi * gi;
                let update = (m.first[i] / c1) / ((m.second[i] / c2).sqrt() + self.eps);
                values[i] -= self.lr * update;
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NonFinite {
                    step: global_step,
                    group: group.to_string(),
                    detail: format!("parameter `{}` after update", p.name()),
                });
            }
        }
        Ok(())
    }
}
