use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::Sample;
use crate::error::{Error, Result};
use crate::metrics::Mask;
use crate::rng::stream;
use crate::tensor::Tensor;

pub const DEFAULT_MAX_ROTATION: f64 = 25.0;
pub const DEFAULT_POISSON_SCALE: f64 = 30.0;

/// Source coordinate and blend weight for half-pixel-centre bilinear
/// resampling of one axis.
fn bilinear_taps(out: usize, inp: usize) -> Vec<(usize, usize, f32)> {
    let scale = inp as f64 / out as f64;
    (0..out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
            let i0 = src.floor() as usize;
            (i0, (i0 + 1).min(inp - 1), (src - i0 as f64) as f32)
        })
        .collect()
}

fn nearest_index(o: usize, out: usize, inp: usize) -> usize {
    (((2 * o + 1) * inp) / (2 * out)).min(inp - 1)
}

fn resize_mask(m: &Mask, h: usize, w: usize) -> Mask {
    Mask::from_fn(h, w, |y, x| m.get(nearest_index(y, h, m.height()), nearest_index(x, w, m.width()))).expect("non-empty target")
}

/// Half-pixel-centre bilinear resampling of one `ih x iw` plane.
pub(crate) fn resample_bilinear(plane: &[f32], ih: usize, iw: usize, h: usize, w: usize) -> Vec<f32> {
    let ty = bilinear_taps(h, ih);
    let tx = bilinear_taps(w, iw);
    let mut out = Vec::with_capacity(h * w);
    for &(y0, y1, fy) in &ty {
        for &(x0, x1, fx) in &tx {
            let top = plane[y0 * iw + x0] + fx * (plane[y0 * iw + x1] - plane[y0 * iw + x0]);
            let bot = plane[y1 * iw + x0] + fx * (plane[y1 * iw + x1] - plane[y1 * iw + x0]);
            out.push(top + fy * (bot - top));
        }
    }
    out
}

/// Bilinear image, nearest-neighbour masks. Targets must be multiples of 16.
pub fn resize(s: &Sample, h: usize, w: usize) -> Result<Sample> {
    if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
        return Err(Error::invalid(format!("resize target {h}x{w} must be a nonzero multiple of 16")));
    }
    let (c, ih, iw) = (s.channels(), s.height(), s.width());
    let src = s.image.data();
    let out: Vec<f32> = (0..c).flat_map(|ch| resample_bilinear(&src[ch * ih * iw..(ch + 1) * ih * iw], ih, iw, h, w)).collect();
    Sample::new(
        s.id.clone(),
        Tensor::from_vec(&[c, h, w], out)?,
        resize_mask(&s.mask, h, w),
        s.region.as_ref().map(|r| resize_mask(r, h, w)),
    )
}

fn snap(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        0.0
    } else {
        v
    }
}

/// Rotates about the image centre by `degrees`; bilinear for the image,
/// nearest for masks, zero outside the source frame.
pub fn rotate(s: &Sample, degrees: f64) -> Result<Sample> {
    if degrees == 0.0 {
        return Ok(s.clone());
    }
    let (c, h, w) = (s.channels(), s.height(), s.width());
    let th = degrees.to_radians();
    let (sin, cos) = (snap(th.sin()), snap(th.cos()));
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let source = |y: usize, x: usize| {
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        (cy - sin * dx + cos * dy, cx + cos * dx + sin * dy)
    };
    let src = s.image.data();
    let mut out = vec![0.0f32; c * h * w];
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = source(y, x);
            let (y0, x0) = (sy.floor(), sx.floor());
            let (fy, fx) = ((sy - y0) as f32, (sx - x0) as f32);
            for ch in 0..c {
                let tap = |yy: f64, xx: f64| {
                    if yy < 0.0 || xx < 0.0 || yy >= h as f64 || xx >= w as f64 {
                        0.0
                    } else {
                        src[(ch * h + yy as usize) * w + xx as usize]
                    }
                };
                let top = tap(y0, x0) * (1.0 - fx) + tap(y0, x0 + 1.0) * fx;
                let bot = tap(y0 + 1.0, x0) * (1.0 - fx) + tap(y0 + 1.0, x0 + 1.0) * fx;
                out[(ch * h + y) * w + x] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    let rot_mask = |m: &Mask| {
        Mask::from_fn(h, w, |y, x| {
            let (sy, sx) = source(y, x);
            let (ry, rx) = (sy.round(), sx.round());
            ry >= 0.0 && rx >= 0.0 && ry < h as f64 && rx < w as f64 && m.get(ry as usize, rx as usize)
        })
        .expect("non-empty")
    };
    Sample::new(s.id.clone(), Tensor::from_vec(&[c, h, w], out)?, rot_mask(&s.mask), s.region.as_ref().map(rot_mask))
}

/// Rotation by an angle drawn uniformly from `[-max_deg, max_deg]`, keyed by
/// `(seed, sample id)`.
pub fn random_rotation(s: &Sample, max_deg: f64, seed: u64) -> Result<Sample> {
    if !(max_deg > 0.0 && max_deg <= 180.0) {
        return Err(Error::invalid(format!("max rotation {max_deg} must lie in (0, 180]")));
    }
    let mut rng = stream(seed, &format!("rotation/{}", s.id));
    let angle = rng.random_range(-max_deg..=max_deg);
    rotate(s, angle)
}

pub(crate) fn gaussian_draws(n: usize, variance: f64, seed: u64) -> Result<Vec<f64>> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::invalid(format!("noise variance {variance} must be finite and >= 0")));
    }
    let normal = Normal::new(0.0, variance.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = stream(seed, "gaussian-noise");
    Ok((0..n).map(|_| normal.sample(&mut rng)).collect())
}

/// Adds `N(0, variance)` per element, then clamps to `[0, 1]`.
pub fn add_gaussian_noise(image: &Tensor<f32>, variance: f64, seed: u64) -> Result<Tensor<f32>> {
    let noise = gaussian_draws(image.numel(), variance, seed)?;
    if variance == 0.0 {
        return Ok(image.clone());
    }
    let data = image.data().iter().zip(noise).map(|(&v, n)| (v as f64 + n).clamp(0.0, 1.0) as f32).collect();
    Tensor::from_vec(image.shape(), data)
}

/// Replaces each value `v` by `Poisson(v * scale) / scale`, clamped to `[0, 1]`.
pub fn add_poisson_noise(image: &Tensor<f32>, scale: f64, seed: u64) -> Result<Tensor<f32>> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::invalid(format!("poisson scale {scale} must be finite and > 0")));
    }
    let mut rng = stream(seed, "poisson-noise");
    let mut data = Vec::with_capacity(image.numel());
    for &v in image.data() {
        let lambda = v.max(0.0) as f64 * scale;
        let k = if lambda > 0.0 { Poisson::new(lambda).map_err(|e| Error::invalid(e.to_string()))?.sample(&mut rng) } else { 0.0 };
        data.push((k / scale).clamp(0.0, 1.0) as f32);
    }
    Tensor::from_vec(image.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Init;

    fn sample(h: usize, w: usize, mask: impl Fn(usize, usize) -> bool) -> Sample {
        let img = Tensor::create(&[1, h, w], Init::Uniform { bound: 0.5, seed: 3 }).unwrap().map(|v| v + 0.5);
        Sample::new("s", img, Mask::from_fn(h, w, mask).unwrap(), None).unwrap()
    }

    #[test]
    fn resize_identity_and_constant() {
        let s = sample(16, 16, |y, x| (y + x) % 3 == 0);
        let r = resize(&s, 16, 16).unwrap();
        assert_eq!(r, s);
        let c = Sample::new("c", Tensor::full(&[1, 16, 16], 0.3).unwrap(), s.mask.clone(), None).unwrap();
        let r = resize(&c, 32, 48).unwrap();
        assert!(r.image.data().iter().all(|&v| v == 0.3));
        assert!(resize(&s, 20, 16).is_err());
    }

    #[test]
    fn checkerboard_nearest_oracle() {
        let m = Mask::from_fn(4, 4, |y, x| (y + x) % 2 == 0).unwrap();
        let up = resize_mask(&m, 8, 8);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(up.get(y, x), m.get(y / 2, x / 2));
            }
        }
    }

    #[test]
    fn rotation_zero_and_half_turn() {
        let n = 17;
        let disk = sample(n, n, |y, x| (y as f64 - 8.0).powi(2) + (x as f64 - 8.0).powi(2) <= 25.0);
        assert_eq!(rotate(&disk, 0.0).unwrap(), disk);
        assert_eq!(rotate(&disk, 180.0).unwrap().mask, disk.mask);
    }

    #[test]
    fn quarter_turn_oracle() {
        let n = 8;
        let l = sample(n, n, |y, x| (x == 1 && (1..6).contains(&y)) || (y == 5 && (1..4).contains(&x)));
        let r = rotate(&l, 90.0).unwrap();
        // out(y, x) reads src(cy - dx, cx + dy) = src(n-1-x, y).
        for y in 0..n {
            for x in 0..n {
                assert_eq!(r.mask.get(y, x), l.mask.get(n - 1 - x, y));
                let expect = l.image.data()[(n - 1 - x) * n + y];
                assert!((r.image.data()[y * n + x] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn random_rotation_is_keyed() {
        let s = sample(16, 16, |y, _| y < 5);
        assert_eq!(random_rotation(&s, 25.0, 9).unwrap(), random_rotation(&s, 25.0, 9).unwrap());
        assert!(random_rotation(&s, 0.0, 9).is_err());
        assert!(random_rotation(&s, 181.0, 9).is_err());
    }

    #[test]
    fn gaussian_noise() {
        let img = Tensor::full(&[1, 256, 256], 0.5f32).unwrap();
        assert_eq!(add_gaussian_noise(&img, 0.0, 1).unwrap(), img);
        assert!(add_gaussian_noise(&img, -0.1, 1).is_err());
        let noisy = add_gaussian_noise(&img, 0.45, 1).unwrap();
        assert!(noisy.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(noisy, add_gaussian_noise(&img, 0.45, 1).unwrap());
        let d = gaussian_draws(256 * 256, 0.45, 1).unwrap();
        let m = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!((var / 0.45 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn poisson_noise() {
        let img = Tensor::full(&[1, 64, 64], 0.5f32).unwrap();
        let n = add_poisson_noise(&img, DEFAULT_POISSON_SCALE, 4).unwrap();
        let mean = n.data().iter().map(|&v| v as f64).sum::<f64>() / n.numel() as f64;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
        assert!(add_poisson_noise(&img, 0.0, 4).is_err());
        let zero = Tensor::zeros(&[1, 4, 4]).unwrap();
        assert_eq!(add_poisson_noise(&zero, 30.0, 4).unwrap(), zero);
    }
}
