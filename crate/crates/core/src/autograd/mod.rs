//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] owns every value produced during one forward pass. Operations
//! append nodes whose inputs are always earlier nodes, so the node index
//! order is a topological order and backward is a single reverse sweep.

mod conv;
mod norm;
mod pointwise;
mod spatial;

pub use conv::ConvOpts;
pub use norm::NormConfig;
pub use pointwise::{gelu_scalar, sigmoid_scalar, Activation};
pub use spatial::Axis;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for [`Tape::custom`]: `(inputs, output, grad_output) -> grad per input`.
pub type CustomRule<T> = Box<dyn Fn(&[&Tensor<T>], &Tensor<T>, &Tensor<T>) -> Vec<Tensor<T>> + Send>;

pub(crate) enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Sum(Var),
    Mean(Var),
    Activation(Var, Activation),
    MulChannel(Var, Var),
    Concat(Vec<Var>),
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: conv::ConvGeom },
    Projection { x: Var, w: Var, b: Option<Var> },
    AxialShift { x: Var, axis: Axis, offsets: Vec<isize> },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    Upsample2 { x: Var },
    BatchNorm(norm::NormSaved<T>),
    LayerNorm(norm::NormSaved<T>),
    BceWithLogits { logits: Var, target: Var },
    Custom { inputs: Vec<Var>, rule: CustomRule<T> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Recording,
    Consumed,
}

/// Ordered record of executed operations together with their outputs.
pub struct Tape<T> {
    values: Vec<Tensor<T>>,
    ops: Vec<Op<T>>,
    requires_grad: Vec<bool>,
    grads: Vec<Option<Tensor<T>>>,
    state: State,
    flops: u64,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Read access to forward values during a backward sweep.
pub(crate) struct BackCtx<'a, T> {
    values: &'a [Tensor<T>],
    requires: &'a [bool],
}

impl<'a, T> BackCtx<'a, T> {
    pub fn val(&self, v: Var) -> &'a Tensor<T> {
        &self.values[v.0]
    }

    pub fn needs(&self, v: Var) -> bool {
        self.requires[v.0]
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { values: Vec::new(), ops: Vec::new(), requires_grad: Vec::new(), grads: Vec::new(), state: State::Recording, flops: 0 }
    }

    /// Registers an input tensor.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.values.push(value);
        self.ops.push(Op::Leaf);
        self.requires_grad.push(requires_grad);
        Var(self.values.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires_grad[v.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Floating point operations executed so far (multiply-add counts as 2).
    pub fn flops(&self) -> u64 {
        self.flops
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub(crate) fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var], flops: u64) -> Var {
        let requires = inputs.iter().any(|v| self.requires_grad[v.0]);
        self.flops += flops;
        self.values.push(value);
        self.ops.push(op);
        self.requires_grad.push(requires);
        Var(self.values.len() - 1)
    }

    /// Records an operation whose forward value was computed by the caller.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor<T>, rule: CustomRule<T>) -> Var {
        self.push(output, Op::Custom { inputs: inputs.to_vec(), rule }, inputs, 0)
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    ///
    /// Fan-out contributions accumulate additively. A tape can be swept once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.state == State::Consumed {
            return Err(Error::TapeConsumed);
        }
        let n = self.values[loss.0].numel();
        if n != 1 {
            return Err(Error::NonScalarLoss(n));
        }
        self.state = State::Consumed;
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.values.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_parts(self.values[loss.0].shape().to_vec(), vec![T::one()]));

        let ctx = BackCtx { values: &self.values, requires: &self.requires_grad };
        for i in (0..=loss.0).rev() {
            if !self.requires_grad[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let contributions = backward_op(&self.ops[i], &ctx, Var(i), &g);
            grads[i] = Some(g);
            for (var, delta) in contributions {
                if !self.requires_grad[var.0] {
                    continue;
                }
                debug_assert_eq!(delta.shape(), self.values[var.0].shape());
                match &mut grads[var.0] {
                    Some(acc) => {
                        for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                            *a += *d;
                        }
                    }
                    slot @ None => *slot = Some(delta),
                }
            }
        }
        self.grads = grads;
        Ok(())
    }
}

fn backward_op<T: Scalar>(op: &Op<T>, ctx: &BackCtx<'_, T>, out: Var, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    match op {
        Op::Leaf => Vec::new(),
        Op::Add(a, b) => pointwise::add_backward(*a, *b, g),
        Op::Sub(a, b) => pointwise::sub_backward(*a, *b, g),
        Op::Mul(a, b) => pointwise::mul_backward(ctx, *a, *b, g),
        Op::Div(a, b) => pointwise::div_backward(ctx, *a, *b, g),
        Op::Scale(a, c) => pointwise::scale_backward(*a, *c, g),
        Op::AddScalar(a) => vec![(*a, g.clone())],
        Op::Sum(a) => pointwise::sum_backward(ctx, *a, g, false),
        Op::Mean(a) => pointwise::sum_backward(ctx, *a, g, true),
        Op::Activation(a, kind) => pointwise::activation_backward(ctx, *a, out, *kind, g),
        Op::MulChannel(x, a) => spatial::mul_channel_backward(ctx, *x, *a, g),
        Op::Concat(parts) => spatial::concat_backward(ctx, parts, g),
        Op::Conv2d { x, w, b, geom } => conv::conv_backward(ctx, *x, *w, *b, geom, g),
        Op::Projection { x, w, b } => conv::projection_backward(ctx, *x, *w, *b, g),
        Op::AxialShift { x, axis, offsets } => spatial::shift_backward(ctx, *x, *axis, offsets, g),
        Op::MaxPool2 { x, argmax } => spatial::maxpool_backward(ctx, *x, argmax, g),
        Op::Upsample2 { x } => spatial::upsample_backward(ctx, *x, g),
        Op::BatchNorm(saved) => norm::batch_norm_backward(ctx, saved, g),
        Op::LayerNorm(saved) => norm::layer_norm_backward(ctx, saved, g),
        Op::BceWithLogits { logits, target } => pointwise::bce_backward(ctx, *logits, *target, g),
        Op::Custom { inputs, rule } => {
            let ins: Vec<&Tensor<T>> = inputs.iter().map(|v| ctx.val(*v)).collect();
            inputs.iter().copied().zip(rule(&ins, ctx.val(out), g)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap(), true);
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn square_gradient_is_two_x() {
        let mut tape = Tape::<f64>::new();
        let data = vec![-1.5, 0.0, 2.0, 3.25];
        let x = tape.leaf(Tensor::from_vec(&[4], data.clone()).unwrap(), true);
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        tape.backward(s).unwrap();
        let want: Vec<f64> = data.iter().map(|v| 2.0 * v).collect();
        assert_eq!(tape.grad(x).unwrap().data(), &want[..]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::ones(&[3]).unwrap(), true);
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(3))));
    }

    #[test]
    fn double_backward_rejected() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::ones(&[3]).unwrap(), true);
        let s = tape.sum(x);
        tape.backward(s).unwrap();
        assert!(matches!(tape.backward(s), Err(Error::TapeConsumed)));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::ones(&[3]).unwrap(), true);
        let c = tape.constant(Tensor::ones(&[3]).unwrap());
        let y = tape.add(x, c).unwrap();
        let s = tape.sum(y);
        tape.backward(s).unwrap();
        assert!(tape.grad(c).is_none());
        assert!(tape.grad(x).is_some());
    }
}
