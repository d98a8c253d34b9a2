//! Dense row-major N-D tensor storage.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// Initialisation scheme for [`Tensor::create`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform on `[-bound, bound)`.
    Uniform {
        bound: f64,
        seed: u64,
    },
    /// Normal with std `sqrt(2 / fan_in)`, fan_in = product of all extents but the first.
    Kaiming {
        seed: u64,
    },
}

/// Dense tensor. Image tensors use N x C x H x W layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::shape(format!("extents must be >= 1 and rank >= 1, got {shape:?}")));
    }
    Ok(())
}

impl<T: Scalar> Tensor<T> {
    pub fn create(shape: &[usize], init: Init) -> Result<Self> {
        check_shape(shape)?;
        let n = numel(shape);
        let data = match init {
            Init::Zeros => vec![T::zero(); n],
            Init::Ones => vec![T::one(); n],
            Init::Uniform { bound, seed } => {
                let mut r = rng::stream(seed, "uniform");
                (0..n).map(|_| T::from_f64_lossy(r.random_range(-bound..bound))).collect()
            }
            Init::Kaiming { seed } => {
                let fan_in: usize = if shape.len() > 1 { numel(&shape[1..]) } else { 1 };
                let std = (2.0 / fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("positive std");
                let mut r = rng::stream(seed, "kaiming");
                (0..n).map(|_| T::from_f64_lossy(normal.sample(&mut r))).collect()
            }
        };
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::create(shape, Init::Zeros)
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::create(shape, Init::Ones)
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        check_shape(shape)?;
        Ok(Tensor { shape: shape.to_vec(), data: vec![value; numel(shape)] })
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        check_shape(shape)?;
        if numel(shape) != data.len() {
            return Err(Error::shape(format!("shape {shape:?} needs {} values, got {}", numel(shape), data.len())));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn scalar(value: T) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    /// Element-wise conversion to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect() }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        if numel(shape) != self.data.len() {
            return Err(Error::shape(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_usize_lossy(self.data.len())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies sample `n` of a batched tensor out as a `1 x ...` tensor.
    pub fn sample(&self, n: usize) -> Result<Self> {
        if n >= self.shape[0] {
            return Err(Error::shape(format!("sample {n} out of range for {:?}", self.shape)));
        }
        let per = numel(&self.shape[1..]);
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Ok(Tensor { shape, data: self.data[n * per..(n + 1) * per].to_vec() })
    }

    /// Stacks equally shaped tensors along a new leading axis. A leading
    /// extent of 1 on the inputs is folded into the batch axis.
    pub fn stack(items: &[&Tensor<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::shape("cannot stack zero tensors"))?;
        let inner: Vec<usize> = first.shape.clone();
        let mut data = Vec::with_capacity(items.len() * first.data.len());
        for t in items {
            if t.shape != inner {
                return Err(Error::shape(format!("stack mismatch: {:?} vs {:?}", t.shape, inner)));
            }
            data.extend_from_slice(&t.data);
        }
        let mut shape = Vec::with_capacity(inner.len() + 1);
        if inner[0] == 1 && inner.len() == 4 {
            shape.push(items.len());
            shape.extend_from_slice(&inner[1..]);
        } else {
            shape.push(items.len());
            shape.extend_from_slice(&inner);
        }
        Ok(Tensor { shape, data })
    }
}

impl<T> Tensor<T> {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// `(n, c, h, w)` of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::shape(format!("expected N x C x H x W, got {:?}", self.shape))),
        }
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor { shape, data }
    }
}

impl<T: Copy> Tensor<T> {
    pub fn at4(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        let (_, cc, h, w) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        self.data[((n * cc + c) * h + y) * w + x]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_and_ones() {
        let z = Tensor::<f64>::create(&[2, 2], Init::Zeros).unwrap();
        assert_eq!(z.data(), &[0.0; 4]);
        let o = Tensor::<f32>::create(&[3], Init::Ones).unwrap();
        assert_eq!(o.data(), &[1.0; 3]);
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(Tensor::<f32>::zeros(&[2, 0]).is_err());
        assert!(Tensor::<f32>::zeros(&[]).is_err());
    }

    #[test]
    fn kaiming_std_matches_fan_in() {
        // pooled over ten seeded draws of a 4x9x3x3 kernel
        let mut values = Vec::new();
        for seed in 7..17 {
            let t = Tensor::<f64>::create(&[4, 9, 3, 3], Init::Kaiming { seed }).unwrap();
            values.extend_from_slice(t.data());
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = (2.0f64 / 81.0).sqrt();
        assert!((var.sqrt() - target).abs() / target < 0.1, "std {}", var.sqrt());
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = Tensor::<f32>::create(&[5, 5], Init::Uniform { bound: 1.0, seed: 3 }).unwrap();
        let b = Tensor::<f32>::create(&[5, 5], Init::Uniform { bound: 1.0, seed: 3 }).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn stack_folds_unit_batch() {
        let a = Tensor::<f32>::ones(&[1, 2, 3, 3]).unwrap();
        let s = Tensor::stack(&[&a, &a, &a]).unwrap();
        assert_eq!(s.shape(), &[3, 2, 3, 3]);
        assert_eq!(s.sample(1).unwrap(), a);
    }
}
