use crate::autograd::sigmoid_scalar;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Binary segmentation mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::shape(format!("mask {height}x{width} with {} values", data.len())));
        }
        Ok(Mask { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![false; height * width])
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self::new(height, width, data)
    }

    /// Values must be exactly 0 or 1.
    pub fn from_values<T: Scalar>(height: usize, width: usize, values: &[T]) -> Result<Self> {
        let mut data = Vec::with_capacity(values.len());
        for (i, &v) in values.iter().enumerate() {
            if v == T::zero() {
                data.push(false);
            } else if v == T::one() {
                data.push(true);
            } else {
                return Err(Error::invalid(format!("mask value {v} at index {i} is not binary")));
            }
        }
        Self::new(height, width, data)
    }

    /// Accepts `[H, W]`, `[1, H, W]` or `[1, 1, H, W]` binary tensors.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Self> {
        let (h, w) = plane_dims(t.shape())?;
        Self::from_values(h, w, t.data())
    }

    /// Foreground where `sigmoid(logit) >= threshold`.
    pub fn from_logits<T: Scalar>(t: &Tensor<T>, threshold: f64) -> Result<Self> {
        let (h, w) = plane_dims(t.shape())?;
        Self::new(h, w, t.data().iter().map(|&v| sigmoid_scalar(v.as_f64()) >= threshold).collect())
    }

    /// `[1, H, W]` tensor of zeros and ones.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let data = self.data.iter().map(|&b| if b { T::one() } else { T::zero() }).collect();
        Tensor::from_vec(&[1, self.height, self.width], data).expect("valid mask shape")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn not(&self) -> Mask {
        Mask { data: self.data.iter().map(|b| !b).collect(), ..self.clone() }
    }

    pub fn transpose(&self) -> Mask {
        Mask::from_fn(self.width, self.height, |y, x| self.get(x, y)).expect("non-empty")
    }

    /// Foreground pixels with at least one 4-neighbour in the background;
    /// pixels outside the frame count as background.
    pub fn boundary(&self) -> Mask {
        let (h, w) = (self.height, self.width);
        Mask::from_fn(h, w, |y, x| {
            self.get(y, x)
                && (y == 0
                    || x == 0
                    || y + 1 == h
                    || x + 1 == w
                    || !self.get(y - 1, x)
                    || !self.get(y + 1, x)
                    || !self.get(y, x - 1)
                    || !self.get(y, x + 1))
        })
        .expect("non-empty")
    }
}

fn plane_dims(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [h, w] | [1, h, w] | [1, 1, h, w] => Ok((*h, *w)),
        _ => Err(Error::shape(format!("expected a single-channel plane, got {shape:?}"))),
    }
}
