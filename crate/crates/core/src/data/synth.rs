//! Synthetic blob dataset.
//!
//! Sample `i` of `synth_blobs(n, size, seed)` has id `blob_{i:05}` and draws
//! every value from `rng::stream(seed, id)` (ChaCha8) as `u = rng.random::<f64>()`
//! in this order:
//!
//! 1. Background: `base = 0.1 + 0.2u`, `amp = 0.02 + 0.04u`, `fx = 1 + 3u`,
//!    `fy = 1 + 3u`, `px = 2πu`, `py = 2πu`;
//!    `bg(y, x) = base + amp * sin(2π fx (x+0.5)/size + px) * cos(2π fy (y+0.5)/size + py)`.
//! 2. Blob count `k = 1 + floor(4u)` (at most 4), then per blob:
//!    `cx = floor(u size) + 0.5`, `cy = floor(u size) + 0.5`,
//!    `ax = (0.06 + 0.12u) size`, `ay = (0.06 + 0.12u) size`, `theta = πu`,
//!    `level = 0.55 + 0.35u`.
//! 3. For each pixel centre `(x+0.5, y+0.5)` and blob, `r` is the elliptical
//!    radius in the blob frame. Opacity is 1 for `r <= 0.8`, falls linearly to
//!    0.5 at `r = 1` and is 0 beyond; blobs are composited in order with
//!    `v = v (1 - a) + level a`. The mask is the union of `r <= 1`.
//! 4. Grain: one `0.04 (u - 0.5)` per pixel in row-major order, then clamp to
//!    `[0, 1]`.
//!
//! Blob centres sit on pixel centres, so every mask is nonempty.

use std::f64::consts::PI;

use rand::Rng;

use super::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::metrics::Mask;
use crate::rng::{derive_seed, stream};
use crate::tensor::Tensor;

struct Blob {
    cx: f64,
    cy: f64,
    ax: f64,
    ay: f64,
    cos: f64,
    sin: f64,
    level: f64,
}

impl Blob {
    fn radius(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        ((u / self.ax).powi(2) + (v / self.ay).powi(2)).sqrt()
    }
}

fn opacity(r: f64) -> f64 {
    if r <= 0.8 {
        1.0
    } else if r <= 1.0 {
        1.0 - 0.5 * (r - 0.8) / 0.2
    } else {
        0.0
    }
}

fn blob_sample(id: String, size: usize, seed: u64) -> Result<Sample> {
    let mut rng = stream(seed, &id);
    let mut u = || rng.random::<f64>();
    let s = size as f64;
    let base = 0.1 + 0.2 * u();
    let amp = 0.02 + 0.04 * u();
    let (fx, fy) = (1.0 + 3.0 * u(), 1.0 + 3.0 * u());
    let (px, py) = (2.0 * PI * u(), 2.0 * PI * u());
    let k = 1 + (4.0 * u()).floor().min(3.0) as usize;
    let blobs: Vec<Blob> = (0..k)
        .map(|_| {
            let cx = (u() * s).floor() + 0.5;
            let cy = (u() * s).floor() + 0.5;
            let ax = (0.06 + 0.12 * u()) * s;
            let ay = (0.06 + 0.12 * u()) * s;
            let theta = PI * u();
            let level = 0.55 + 0.35 * u();
            Blob { cx, cy, ax, ay, cos: theta.cos(), sin: theta.sin(), level }
        })
        .collect();
    let mut img = Vec::with_capacity(size * size);
    let mut mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (xc, yc) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut v = base + amp * (2.0 * PI * fx * xc / s + px).sin() * (2.0 * PI * fy * yc / s + py).cos();
            let mut inside = false;
            for b in &blobs {
                let r = b.radius(xc, yc);
                let a = opacity(r);
                v = v * (1.0 - a) + b.level * a;
                inside |= r <= 1.0;
            }
            img.push(v);
            mask.push(inside);
        }
    }
    let data = img.into_iter().map(|v| (v + 0.04 * (u() - 0.5)).clamp(0.0, 1.0) as f32).collect();
    Sample::new(id, Tensor::from_vec(&[1, size, size], data)?, Mask::new(size, size, mask)?, None)
}

pub fn synth_blobs(n: usize, size: usize, seed: u64) -> Result<Dataset> {
    if n < 1 {
        return Err(Error::invalid("synthetic dataset needs at least one sample"));
    }
    if size == 0 || size % 16 != 0 {
        return Err(Error::invalid(format!("synthetic image size {size} must be a nonzero multiple of 16")));
    }
    let samples = (0..n).map(|i| blob_sample(format!("blob_{i:05}"), size, seed)).collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, Split::Train, format!("synth_blobs(n={n}, size={size}, seed={seed})"))
}

/// Disjoint train/validation sets; validation draws from a seed derived
/// from `seed`.
pub fn synth_split(n_train: usize, n_val: usize, size: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let train = synth_blobs(n_train, size, seed)?;
    let mut val = synth_blobs(n_val, size, derive_seed(seed, "validation"))?;
    val.split = Split::Test;
    Ok((train, val))
}
