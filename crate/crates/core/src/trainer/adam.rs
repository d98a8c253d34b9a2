use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::OptimizerSnapshot;
use crate::params::{Named, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 5e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be > 0, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid(format!("eps must be > 0, got {}", self.eps)));
        }
        Ok(())
    }
}

/// First and second moments, aligned with the parameter order of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros =
            || store.params().iter().map(|p| Tensor::from_parts(p.value.shape().to_vec(), vec![T::zero(); p.value.numel()])).collect();
        AdamState { step: 0, m: zeros(), v: zeros() }
    }

    pub fn snapshot(&self, store: &ParamStore<T>) -> OptimizerSnapshot<T> {
        let named =
            |ts: &[Tensor<T>]| store.params().iter().zip(ts).map(|(p, t)| Named { name: p.name.clone(), value: t.clone() }).collect();
        OptimizerSnapshot { step: self.step, first: named(&self.m), second: named(&self.v) }
    }

    pub fn restore(snap: &OptimizerSnapshot<T>, store: &ParamStore<T>) -> Result<Self> {
        let take = |items: &[Named<T>]| -> Result<Vec<Tensor<T>>> {
            if items.len() != store.params().len() {
                return Err(Error::shape("optimizer state does not match the parameter table"));
            }
            store
                .params()
                .iter()
                .zip(items)
                .map(|(p, it)| {
                    if p.name != it.name || p.value.shape() != it.value.shape() {
                        Err(Error::shape(format!("optimizer moment {} does not match parameter {}", it.name, p.name)))
                    } else {
                        Ok(it.value.clone())
                    }
                })
                .collect()
        };
        Ok(AdamState { step: snap.step, m: take(&snap.first)?, v: take(&snap.second)? })
    }
}

/// One bias-corrected Adam update. Parameters without a gradient entry
/// are treated as having a zero gradient.
pub fn adam_step<T: Scalar>(
    store: &mut ParamStore<T>,
    grads: &[(ParamId, Tensor<T>)],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    let n = store.params().len();
    if state.m.len() != n || state.v.len() != n {
        return Err(Error::shape(format!("optimizer state covers {} parameters, store has {n}", state.m.len())));
    }
    let mut by_id: Vec<Option<&Tensor<T>>> = vec![None; n];
    for (id, g) in grads {
        let i = id.index();
        if i >= n || g.shape() != store.params()[i].value.shape() {
            return Err(Error::shape(format!("gradient {:?} does not match its parameter", g.shape())));
        }
        by_id[i] = Some(g);
    }
    for (i, p) in store.params().iter().enumerate() {
        if state.m[i].shape() != p.value.shape() || state.v[i].shape() != p.value.shape() {
            return Err(Error::shape(format!("optimizer moments for {} have the wrong shape", p.name)));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c = |v: f64| T::from_f64_lossy(v);
    let (b1, b2) = (c(cfg.beta1), c(cfg.beta2));
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2_sqrt = (1.0 - cfg.beta2.powi(t)).sqrt();
    let step_size = c(cfg.lr / bc1);
    let (bc2_sqrt, eps) = (c(bc2_sqrt), c(cfg.eps));
    for (i, p) in store.params_mut().iter_mut().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let w = p.value.data_mut();
        for j in 0..w.len() {
            let g = by_id[i].map_or(T::zero(), |g| g.data()[j]);
            m[j] = b1 * m[j] + (T::one() - b1) * g;
            v[j] = b2 * v[j] + (T::one() - b2) * g * g;
            w[j] -= step_size * m[j] / (v[j].sqrt() / bc2_sqrt + eps);
        }
    }
    Ok(())
}
