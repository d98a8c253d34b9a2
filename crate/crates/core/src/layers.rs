//! Parameterised building blocks shared by the architectural blocks.

use crate::autograd::{ConvOpts, NormConfig, Var};
use crate::error::Result;
use crate::params::{BufferId, ParamId, ParamStore, Session};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::tensor::{Init, Tensor};

/// Deterministic parameter initialisation keyed by model seed and name.
#[derive(Debug, Clone, Copy)]
pub struct Builder {
    pub seed: u64,
}

impl Builder {
    pub fn new(seed: u64) -> Self {
        Builder { seed }
    }

    pub fn kaiming<T: Scalar>(&self, store: &mut ParamStore<T>, name: &str, shape: &[usize]) -> Result<ParamId> {
        let t = Tensor::create(shape, Init::Kaiming { seed: derive_seed(self.seed, name) })?;
        Ok(store.add_param(name, t))
    }

    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn fan_in_uniform<T: Scalar>(&self, store: &mut ParamStore<T>, name: &str, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let t = Tensor::create(shape, Init::Uniform { bound, seed: derive_seed(self.seed, name) })?;
        Ok(store.add_param(name, t))
    }

    pub fn constant<T: Scalar>(&self, store: &mut ParamStore<T>, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        Ok(store.add_param(name, Tensor::full(shape, T::from_f64_lossy(value))?))
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub opts: ConvOpts,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        b: &Builder,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        opts: ConvOpts,
        bias: bool,
    ) -> Result<Self> {
        let weight = b.kaiming(store, &format!("{name}.weight"), &[cout, cin / opts.groups, kernel, kernel])?;
        let bias = if bias { Some(b.constant(store, &format!("{name}.bias"), &[cout], 0.0)?) } else { None };
        Ok(Conv2d { weight, bias, opts })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = s.param(self.weight);
        let b = self.bias.map(|b| s.param(b));
        s.tape.conv2d(x, w, b, self.opts)
    }

    pub fn out_channels<T: Scalar>(&self, store: &ParamStore<T>) -> usize {
        store.param(self.weight).shape()[0]
    }
}

/// Channel projection (a dense layer applied at every position).
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, b: &Builder, name: &str, cin: usize, cout: usize) -> Result<Self> {
        let weight = b.fan_in_uniform(store, &format!("{name}.weight"), &[cout, cin], cin)?;
        let bias = b.fan_in_uniform(store, &format!("{name}.bias"), &[cout], cin)?;
        Ok(Linear { weight, bias })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = s.param(self.weight);
        let b = s.param(self.bias);
        s.tape.channel_projection(x, w, Some(b))
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
    pub cfg: NormConfig,
}

impl BatchNorm2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, b: &Builder, name: &str, c: usize) -> Result<Self> {
        let gamma = b.constant(store, &format!("{name}.gamma"), &[c], 1.0)?;
        let beta = b.constant(store, &format!("{name}.beta"), &[c], 0.0)?;
        let running_mean = store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[c])?);
        let running_var = store.add_buffer(format!("{name}.running_var"), Tensor::ones(&[c])?);
        Ok(BatchNorm2d { gamma, beta, running_mean, running_var, cfg: NormConfig::default() })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        s.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var, self.cfg)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, b: &Builder, name: &str, c: usize) -> Result<Self> {
        let gamma = b.constant(store, &format!("{name}.gamma"), &[c], 1.0)?;
        let beta = b.constant(store, &format!("{name}.beta"), &[c], 0.0)?;
        Ok(LayerNorm { gamma, beta, eps: 1e-5 })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let g = s.param(self.gamma);
        let b = s.param(self.beta);
        s.tape.layer_norm(x, g, b, self.eps)
    }
}

/// Conv -> BatchNorm -> ReLU.
#[derive(Debug, Clone)]
pub struct ConvBnRelu {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBnRelu {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        b: &Builder,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        opts: ConvOpts,
    ) -> Result<Self> {
        let conv = Conv2d::new(store, b, &format!("{name}.conv"), cin, cout, kernel, opts, true)?;
        let bn = BatchNorm2d::new(store, b, &format!("{name}.bn"), cout)?;
        Ok(ConvBnRelu { conv, bn })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let y = self.conv.forward(s, x)?;
        let y = self.bn.forward(s, y)?;
        Ok(s.tape.relu(y))
    }
}
