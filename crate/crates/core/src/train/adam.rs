use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
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

/// First and second moments per parameter, keyed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub names: Vec<String>,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let ids: Vec<_> = store.ids().collect();
        AdamState {
            step: 0,
            names: ids.iter().map(|&id| store.name(id).to_string()).collect(),
            m: ids.iter().map(|&id| Tensor::zeros(store.value(id).shape())).collect(),
            v: ids.iter().map(|&id| Tensor::zeros(store.value(id).shape())).collect(),
        }
    }

    fn check(&self, store: &ParamStore) -> Result<()> {
        if self.names.len() != store.len() {
            return Err(Error::Compatibility(format!(
                "optimizer state has {} parameters, store has {}",
                self.names.len(),
                store.len()
            )));
        }
        for (i, id) in store.ids().enumerate() {
            if self.names[i] != store.name(id) || self.m[i].shape() != store.value(id).shape() {
                return Err(Error::Compatibility(format!(
                    "optimizer state does not match parameter `{}`",
                    store.name(id)
                )));
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update of every parameter from its stored gradient.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    state.check(store)?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let ids: Vec<_> = store.ids().collect();
    for (i, id) in ids.into_iter().enumerate() {
        let grad = store.grad(id).clone();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let value = store.value_mut(id);
        for (j, &g) in grad.data().iter().enumerate() {
            let mj = cfg.beta1 * m.data()[j] + (1.0 - cfg.beta1) * g;
            let vj = cfg.beta2 * v.data()[j] + (1.0 - cfg.beta2) * g * g;
            m.data_mut()[j] = mj;
            v.data_mut()[j] = vj;
            value.data_mut()[j] -= cfg.lr * (mj / c1) / ((vj / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}
