//! Named parameter storage and the per-pass [`Session`] that binds stored
//! parameters onto a tape.

use std::collections::BTreeMap;

use crate::autograd::{NormConfig, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BufferId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Named<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Trainable parameters plus non-trainable buffers (normalisation running
/// statistics), both addressed by stable ids and unique names.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    params: Vec<Named<T>>,
    buffers: Vec<Named<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new(), buffers: Vec::new() }
    }

    pub fn add_param(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        debug_assert!(self.params.iter().all(|p| p.name != name), "duplicate parameter {name}");
        self.params.push(Named { name, value });
        ParamId(self.params.len() - 1)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor<T>) -> BufferId {
        self.buffers.push(Named { name: name.into(), value });
        BufferId(self.buffers.len() - 1)
    }

    pub fn param(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn param_name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor<T> {
        &self.buffers[id.0].value
    }

    pub fn params(&self) -> &[Named<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Named<T>] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Named<T>] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Named<T>] {
        &mut self.buffers
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find_param(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of trainable scalars.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    fn buffer_pair_mut(&mut self, a: BufferId, b: BufferId) -> (&mut [T], &mut [T]) {
        assert_ne!(a, b);
        if a.0 < b.0 {
            let (lo, hi) = self.buffers.split_at_mut(b.0);
            (lo[a.0].value.data_mut(), hi[0].value.data_mut())
        } else {
            let (lo, hi) = self.buffers.split_at_mut(a.0);
            (hi[0].value.data_mut(), lo[b.0].value.data_mut())
        }
    }
}

enum StoreRef<'a, T> {
    Mut(&'a mut ParamStore<T>),
    Shared(&'a ParamStore<T>),
}

impl<T> StoreRef<'_, T> {
    fn get(&self) -> &ParamStore<T> {
        match self {
            StoreRef::Mut(s) => s,
            StoreRef::Shared(s) => s,
        }
    }
}

/// One forward (and optionally backward) pass over a model's parameters.
pub struct Session<'a, T: Scalar> {
    pub tape: &'a mut Tape<T>,
    store: StoreRef<'a, T>,
    bound: Vec<Option<Var>>,
    training: bool,
    grad_params: bool,
    probes: BTreeMap<String, Var>,
}

impl<'a, T: Scalar> Session<'a, T> {
    /// Parameters are registered as gradient-requiring leaves.
    pub fn new(tape: &'a mut Tape<T>, store: &'a mut ParamStore<T>, training: bool) -> Self {
        let n = store.params.len();
        Session { tape, store: StoreRef::Mut(store), bound: vec![None; n], training, grad_params: true, probes: BTreeMap::new() }
    }

    /// Evaluation mode over a shared store. Parameters are registered as
    /// constants; only non-parameter leaves can receive gradients.
    pub fn inference(tape: &'a mut Tape<T>, store: &'a ParamStore<T>) -> Self {
        let n = store.params.len();
        Session { tape, store: StoreRef::Shared(store), bound: vec![None; n], training: false, grad_params: false, probes: BTreeMap::new() }
    }

    pub fn training(&self) -> bool {
        self.training
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store.get()
    }

    /// Uses `var` for parameter `id` instead of a fresh leaf.
    pub fn bind(&mut self, id: ParamId, var: Var) {
        self.bound[id.0] = Some(var);
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.tape.leaf(self.store.get().params[id.0].value.clone(), self.grad_params);
        self.bound[id.0] = Some(v);
        v
    }

    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: ParamId,
        beta: ParamId,
        running_mean: BufferId,
        running_var: BufferId,
        cfg: NormConfig,
    ) -> Result<Var> {
        let g = self.param(gamma);
        let b = self.param(beta);
        let training = self.training;
        match &mut self.store {
            StoreRef::Mut(store) => {
                let (rm, rv) = store.buffer_pair_mut(running_mean, running_var);
                self.tape.batch_norm(x, g, b, rm, rv, training, cfg)
            }
            StoreRef::Shared(store) => {
                if training {
                    return Err(Error::invalid("training pass needs a mutable parameter store"));
                }
                let mut rm = store.buffer(running_mean).data().to_vec();
                let mut rv = store.buffer(running_var).data().to_vec();
                self.tape.batch_norm(x, g, b, &mut rm, &mut rv, false, cfg)
            }
        }
    }

    /// Records `var` under `label` for later inspection (e.g. Grad-CAM).
    pub fn probe(&mut self, label: &str, var: Var) {
        self.probes.insert(label.to_string(), var);
    }

    pub fn probes(&self) -> &BTreeMap<String, Var> {
        &self.probes
    }

    /// Fails with a diagnostic naming `stage` if `var` holds NaN or Inf.
    pub fn check_finite(&self, stage: &str, var: Var) -> Result<()> {
        if self.tape.value(var).all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(stage.to_string()))
        }
    }

    /// Gradients of every parameter touched in this pass, after `tape.backward`.
    pub fn param_grads(&self) -> Vec<(ParamId, Tensor<T>)> {
        self.bound
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let v = (*v)?;
                self.tape.grad(v).map(|g| (ParamId(i), g.clone()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_and_lookup() {
        let mut s = ParamStore::<f32>::new();
        assert_eq!(s.count(), 0);
        let a = s.add_param("a.weight", Tensor::zeros(&[4, 2, 3, 3]).unwrap());
        s.add_param("a.bias", Tensor::zeros(&[4]).unwrap());
        assert_eq!(s.count(), 76);
        assert_eq!(s.find_param("a.weight"), Some(a));
        assert_eq!(s.param_name(a), "a.weight");
    }

    #[test]
    fn session_binds_each_param_once() {
        let mut store = ParamStore::<f64>::new();
        let w = store.add_param("w", Tensor::ones(&[3]).unwrap());
        let mut tape = Tape::new();
        let mut s = Session::new(&mut tape, &mut store, true);
        let a = s.param(w);
        let b = s.param(w);
        assert_eq!(a, b);
        let y = s.tape.add(a, b).unwrap();
        let l = s.tape.sum(y);
        s.tape.backward(l).unwrap();
        let grads = s.param_grads();
        assert_eq!(grads.len(), 1);
        assert_eq!(grads[0].1.data(), &[2.0; 3]);
    }
}
