//! Adam with explicit, serialisable state.

use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, contract, Result};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| (0.0..1.0).contains(&b);
        if !in_unit(self.beta1) || !in_unit(self.beta2) || !(self.eps > 0.0) {
            return Err(config_err!("Adam needs betas in [0, 1) and eps > 0, got {self:?}"));
        }
        Ok(())
    }
}

/// First and second moment estimates per parameter name.
#[derive(Clone)]
pub struct Adam {
    config: AdamConfig,
    steps: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            steps: 0,
            moments: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// Updates applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Update every trainable parameter of `store` that has a gradient.
    pub fn step(&mut self, store: &ParamStore, grads: &GradStore, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(contract!("learning rate must be positive, got {lr}"));
        }
        self.steps += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.steps as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (name, var) in store.trainable() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let g = g.detach();
            let (m, v) = match self.moments.get(name) {
                Some((m, v)) => (
                    ((m * beta1)? + (&g * (1.0 - beta1))?)?,
                    ((v * beta2)? + (g.sqr()? * (1.0 - beta2))?)?,
                ),
                None => ((&g * (1.0 - beta1))?, (g.sqr()? * (1.0 - beta2))?),
            };
            let denom = ((&v / c2)?.sqrt()? + eps)?;
            let update = ((&m / c1)? / denom)?;
            var.set(&(var.as_tensor().detach() - (update * lr)?)?)?;
            self.moments.insert(name.to_string(), (m, v));
        }
        Ok(())
    }

    /// Moment tensors as `m.<param>` / `v.<param>`.
    pub fn state_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(2 * self.moments.len());
        for (name, (m, v)) in &self.moments {
            out.push((format!("m.{name}"), m.clone()));
            out.push((format!("v.{name}"), v.clone()));
        }
        out
    }

    /// Rebuild from [`Adam::state_tensors`] output and a step count.
    pub fn from_state(
        config: AdamConfig,
        steps: u64,
        tensors: impl IntoIterator<Item = (String, Tensor)>,
    ) -> Result<Self> {
        let mut ms = BTreeMap::new();
        let mut vs = BTreeMap::new();
        for (key, t) in tensors {
            if let Some(n) = key.strip_prefix("m.") {
                ms.insert(n.to_string(), t);
            } else if let Some(n) = key.strip_prefix("v.") {
                vs.insert(n.to_string(), t);
            } else {
                return Err(contract!("unexpected optimizer tensor `{key}`"));
            }
        }
        if ms.len() != vs.len() || ms.keys().zip(vs.keys()).any(|(a, b)| a != b) {
            return Err(contract!("optimizer moments are incomplete"));
        }
        let moments = ms
            .into_iter()
            .zip(vs.into_values())
            .map(|((n, m), v)| (n, (m, v)))
            .collect();
        let mut adam = Self::new(config)?;
        adam.steps = steps;
        adam.moments = moments;
        Ok(adam)
    }
}
