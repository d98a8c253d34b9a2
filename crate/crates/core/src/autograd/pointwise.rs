//! Element-wise arithmetic, reductions, activations and the logistic loss.

use statrs::function::erf::erf;

use super::{BackCtx, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// Exact form `x * Phi(x)` with the standard normal CDF.
    Gelu,
    Sigmoid,
}

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x * INV_SQRT_2))
}

#[inline]
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    let xf = x.as_f64();
    T::from_f64_lossy(xf * normal_cdf(xf))
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    normal_cdf(x) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

fn same_shape<T: Scalar>(tape: &Tape<T>, a: Var, b: Var, what: &str) -> Result<()> {
    if tape.shape(a) != tape.shape(b) {
        return Err(Error::shape(format!("{what}: {:?} vs {:?}", tape.shape(a), tape.shape(b))));
    }
    Ok(())
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

impl<T: Scalar> Tape<T> {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "add")?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let n = v.numel() as u64;
        Ok(self.push(v, Op::Add(a, b), &[a, b], n))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "sub")?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let n = v.numel() as u64;
        Ok(self.push(v, Op::Sub(a, b), &[a, b], n))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "mul")?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let n = v.numel() as u64;
        Ok(self.push(v, Op::Mul(a, b), &[a, b], n))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self, a, b, "div")?;
        let v = zip_map(self.value(a), self.value(b), |x, y| x / y);
        let n = v.numel() as u64;
        Ok(self.push(v, Op::Div(a, b), &[a, b], n))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x * c);
        let n = v.numel() as u64;
        self.push(v, Op::Scale(a, c), &[a], n)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x + c);
        let n = v.numel() as u64;
        self.push(v, Op::AddScalar(a), &[a], n)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        let n = self.value(a).numel() as u64;
        self.push(v, Op::Sum(a), &[a], n)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).mean());
        let n = self.value(a).numel() as u64;
        self.push(v, Op::Mean(a), &[a], n)
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let v = match kind {
            Activation::Relu => self.value(a).map(|x| if x > T::zero() { x } else { T::zero() }),
            Activation::Gelu => self.value(a).map(gelu_scalar),
            Activation::Sigmoid => self.value(a).map(sigmoid_scalar),
        };
        let n = v.numel() as u64;
        self.push(v, Op::Activation(a, kind), &[a], n)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Gelu)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Sigmoid)
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `target`, computed
    /// in the overflow-safe form `max(x,0) - x*t + ln(1 + exp(-|x|))`.
    pub fn bce_with_logits(&mut self, logits: Var, target: Var) -> Result<Var> {
        same_shape(self, logits, target, "bce_with_logits")?;
        let x = self.value(logits);
        let t = self.value(target);
        let total: T = x.data().iter().zip(t.data()).map(|(&x, &t)| x.max(T::zero()) - x * t + (-x.abs()).exp().ln_1p()).sum();
        let n = x.numel();
        let v = Tensor::scalar(total / T::from_usize_lossy(n));
        Ok(self.push(v, Op::BceWithLogits { logits, target }, &[logits, target], 6 * n as u64))
    }
}

pub(super) fn add_backward<T: Scalar>(a: Var, b: Var, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    vec![(a, g.clone()), (b, g.clone())]
}

pub(super) fn sub_backward<T: Scalar>(a: Var, b: Var, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    vec![(a, g.clone()), (b, g.map(|v| -v))]
}

pub(super) fn mul_backward<T: Scalar>(ctx: &BackCtx<'_, T>, a: Var, b: Var, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let mut out = Vec::with_capacity(2);
    if ctx.needs(a) {
        out.push((a, zip_map(g, ctx.val(b), |g, y| g * y)));
    }
    if ctx.needs(b) {
        out.push((b, zip_map(g, ctx.val(a), |g, x| g * x)));
    }
    out
}

pub(super) fn div_backward<T: Scalar>(ctx: &BackCtx<'_, T>, a: Var, b: Var, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let mut out = Vec::with_capacity(2);
    let bv = ctx.val(b);
    if ctx.needs(a) {
        out.push((a, zip_map(g, bv, |g, y| g / y)));
    }
    if ctx.needs(b) {
        let av = ctx.val(a);
        let data = g.data().iter().zip(av.data()).zip(bv.data()).map(|((&g, &x), &y)| -g * x / (y * y)).collect();
        out.push((b, Tensor::from_parts(bv.shape().to_vec(), data)));
    }
    out
}

pub(super) fn scale_backward<T: Scalar>(a: Var, c: T, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    vec![(a, g.map(|v| v * c))]
}

pub(super) fn sum_backward<T: Scalar>(ctx: &BackCtx<'_, T>, a: Var, g: &Tensor<T>, mean: bool) -> Vec<(Var, Tensor<T>)> {
    let shape = ctx.val(a).shape().to_vec();
    let n = ctx.val(a).numel();
    let mut gv = g.data()[0];
    if mean {
        gv /= T::from_usize_lossy(n);
    }
    vec![(a, Tensor::from_parts(shape, vec![gv; n]))]
}

pub(super) fn activation_backward<T: Scalar>(
    ctx: &BackCtx<'_, T>,
    a: Var,
    out: Var,
    kind: Activation,
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let x = ctx.val(a);
    let data: Vec<T> = match kind {
        Activation::Relu => g.data().iter().zip(x.data()).map(|(&g, &x)| if x > T::zero() { g } else { T::zero() }).collect(),
        Activation::Gelu => g.data().iter().zip(x.data()).map(|(&g, &x)| g * T::from_f64_lossy(gelu_grad(x.as_f64()))).collect(),
        Activation::Sigmoid => g.data().iter().zip(ctx.val(out).data()).map(|(&g, &s)| g * s * (T::one() - s)).collect(),
    };
    vec![(a, Tensor::from_parts(x.shape().to_vec(), data))]
}

pub(super) fn bce_backward<T: Scalar>(ctx: &BackCtx<'_, T>, logits: Var, target: Var, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let x = ctx.val(logits);
    let t = ctx.val(target);
    let scale = g.data()[0] / T::from_usize_lossy(x.numel());
    let mut out = Vec::with_capacity(2);
    if ctx.needs(logits) {
        let data = x.data().iter().zip(t.data()).map(|(&x, &t)| (sigmoid_scalar(x) - t) * scale).collect();
        out.push((logits, Tensor::from_parts(x.shape().to_vec(), data)));
    }
    if ctx.needs(target) {
        out.push((target, x.map(|x| -x * scale)));
    }
    out
}
