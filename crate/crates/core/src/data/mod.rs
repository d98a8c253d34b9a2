//! Samples, datasets, PNG directory IO, geometric augmentation, noise
//! injection and the synthetic blob generator.

mod io;
mod synth;
mod transform;

pub use io::{load_dataset, load_image, save_dataset, write_image, write_mask};
pub use synth::{synth_blobs, synth_split};
pub(crate) use transform::resample_bilinear;
pub use transform::{add_gaussian_noise, add_poisson_noise, random_rotation, resize, rotate, DEFAULT_MAX_ROTATION, DEFAULT_POISSON_SCALE};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Mask;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One image with its ground-truth mask. `image` is `[C, H, W]` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Tensor<f32>,
    pub mask: Mask,
    /// Region of interest for area ratios (e.g. a lung field).
    pub region: Option<Mask>,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: Tensor<f32>, mask: Mask, region: Option<Mask>) -> Result<Self> {
        let s = Sample { id: id.into(), image, mask, region };
        s.validate()?;
        Ok(s)
    }

    pub fn channels(&self) -> usize {
        self.image.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[2]
    }

    fn validate(&self) -> Result<()> {
        let sh = self.image.shape();
        if sh.len() != 3 {
            return Err(Error::shape(format!("sample {} image must be [C, H, W], got {sh:?}", self.id)));
        }
        let hw = (sh[1], sh[2]);
        for (what, m) in std::iter::once(("mask", &self.mask)).chain(self.region.iter().map(|r| ("region", r))) {
            if (m.height(), m.width()) != hw {
                return Err(Error::shape(format!(
                    "sample {}: {what} {}x{} does not match image {}x{}",
                    self.id,
                    m.height(),
                    m.width(),
                    hw.0,
                    hw.1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub split: Split,
    pub source: String,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, split: Split, source: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::invalid(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Dataset { samples, split, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Every sample has the same `[C, H, W]`, and H and W are multiples
    /// of `divisor`.
    pub fn uniform_shape(&self, divisor: usize) -> Result<[usize; 3]> {
        let first = self.samples.first().ok_or_else(|| Error::invalid(format!("dataset {} is empty", self.source)))?;
        let shape = [first.channels(), first.height(), first.width()];
        for s in &self.samples {
            if s.image.shape() != shape {
                return Err(Error::shape(format!("sample {} has shape {:?}, expected {shape:?}", s.id, s.image.shape())));
            }
        }
        if shape[1] % divisor != 0 || shape[2] % divisor != 0 {
            return Err(Error::shape(format!("images are {}x{}, which is not divisible by {divisor}", shape[1], shape[2])));
        }
        Ok(shape)
    }

    /// Stacks the chosen samples into `[N, C, H, W]` images and `[N, 1, H, W]` masks.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
        let samples: Vec<&Sample> = indices.iter().map(|&i| &self.samples[i]).collect();
        batch_samples(&samples)
    }

    pub fn map(&self, f: impl Fn(&Sample) -> Result<Sample>) -> Result<Dataset> {
        let samples = self.samples.iter().map(f).collect::<Result<Vec<_>>>()?;
        Ok(Dataset { samples, split: self.split, source: self.source.clone() })
    }
}

pub fn batch_samples<T: Scalar>(samples: &[&Sample]) -> Result<(Tensor<T>, Tensor<T>)> {
    if samples.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let images: Vec<Tensor<T>> = samples.iter().map(|s| s.image.cast()).collect();
    let masks: Vec<Tensor<T>> = samples.iter().map(|s| s.mask.to_tensor()).collect();
    let x = Tensor::stack(&images.iter().collect::<Vec<_>>())?;
    let y = Tensor::stack(&masks.iter().collect::<Vec<_>>())?;
    Ok((x, y))
}
