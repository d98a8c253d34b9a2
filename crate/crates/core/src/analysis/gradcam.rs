use std::path::Path;

use image::GrayImage;

use crate::autograd::{Tape, Var};
use crate::data::resample_bilinear;
use crate::error::{Error, Result};
use crate::network::Model;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Accepted layer ids. `F3`, `F4` and `F5` alias encoder stage 3, encoder
/// stage 4 and the bottleneck.
pub const LAYER_IDS: [&str; 12] = ["F3", "F4", "F5", "enc1", "enc2", "enc3", "enc4", "bottleneck", "dec4", "dec3", "dec2", "dec1"];

pub fn resolve_layer(id: &str) -> Result<&'static str> {
    let probe = match id.to_ascii_lowercase().as_str() {
        "f3" => "enc3",
        "f4" => "enc4",
        "f5" => "bottleneck",
        other => match LAYER_IDS.iter().find(|l| **l == other) {
            Some(l) => l,
            None => return Err(Error::invalid(format!("unknown layer {id:?}; expected one of {LAYER_IDS:?}"))),
        },
    };
    Ok(probe)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatMap {
    pub layer: String,
    /// `[h, w]` at the probed feature resolution, in `[0, 1]`.
    pub values: Tensor<f32>,
    /// `[H, W]` bilinear copy at input resolution.
    pub upsampled: Tensor<f32>,
    /// The raw map was constant (typically all-zero gradients), so it was
    /// left at zero instead of being normalised.
    pub degenerate: bool,
}

impl HeatMap {
    /// Input (first channel) and heat map side by side as 8-bit grayscale.
    pub fn write_png(&self, input: &Tensor<f32>, path: &Path) -> Result<()> {
        let sh = input.shape();
        let (h, w) = (sh[sh.len() - 2], sh[sh.len() - 1]);
        if self.upsampled.shape() != [h, w] {
            return Err(Error::shape(format!("heat map {:?} vs input {h}x{w}", self.upsampled.shape())));
        }
        let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let mut img = GrayImage::new(2 * w as u32, h as u32);
        for y in 0..h {
            for x in 0..w {
                img.put_pixel(x as u32, y as u32, image::Luma([q(input.data()[y * w + x])]));
                img.put_pixel((w + x) as u32, y as u32, image::Luma([q(self.upsampled.data()[y * w + x])]));
            }
        }
        img.save(path).map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })
    }
}

/// Grad-CAM of `feature` (`[1, C, h, w]`) for a scalar `score` already on
/// `tape`: weights are the spatial means of `d score / d feature`, the map is
/// `ReLU(sum_c w_c A_c)`, min-max normalised and resampled to `out_hw`.
pub fn cam_from_tape<T: Scalar>(tape: &mut Tape<T>, feature: Var, score: Var, out_hw: (usize, usize), layer: &str) -> Result<HeatMap> {
    tape.backward(score)?;
    let a = tape.value(feature).clone();
    let (n, c, h, w) = a.dims4()?;
    if n != 1 {
        return Err(Error::shape(format!("Grad-CAM needs a single image, got batch {n}")));
    }
    let plane = h * w;
    let zero = Tensor::from_parts(a.shape().to_vec(), vec![T::zero(); a.numel()]);
    let g = tape.grad(feature).unwrap_or(&zero);
    let mut cam = vec![0.0f64; plane];
    for ch in 0..c {
        let gs = &g.data()[ch * plane..(ch + 1) * plane];
        let wc = gs.iter().map(|v| v.as_f64()).sum::<f64>() / plane as f64;
        for (o, v) in cam.iter_mut().zip(&a.data()[ch * plane..(ch + 1) * plane]) {
            *o += wc * v.as_f64();
        }
    }
    cam.iter_mut().for_each(|v| *v = v.max(0.0));
    let (lo, hi) = cam.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let degenerate = !(hi > lo);
    let values: Vec<f32> = if degenerate { vec![0.0; plane] } else { cam.iter().map(|v| ((v - lo) / (hi - lo)) as f32).collect() };
    let up = resample_bilinear(&values, h, w, out_hw.0, out_hw.1);
    Ok(HeatMap {
        layer: layer.to_string(),
        values: Tensor::from_vec(&[h, w], values)?,
        upsampled: Tensor::from_vec(&[out_hw.0, out_hw.1], up)?,
        degenerate,
    })
}

/// Grad-CAM for one `[1, C, H, W]` image; the target score is the mean
/// foreground logit over all pixels.
pub fn grad_cam<T: Scalar>(model: &Model<T>, input: &Tensor<T>, layer_id: &str) -> Result<HeatMap> {
    let probe = resolve_layer(layer_id)?;
    let (n, _, h, w) = input.dims4()?;
    if n != 1 {
        return Err(Error::shape(format!("Grad-CAM needs a single image, got batch {n}")));
    }
    let mut trace = model.trace(input)?;
    let feature = trace.probes[probe];
    let score = trace.tape.mean(trace.logits);
    cam_from_tape(&mut trace.tape, feature, score, (h, w), layer_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::test_util::zero_params;
    use crate::network::{build_msdcanet, ModelConfig, Variant};
    use crate::tensor::Init;

    fn mini() -> Model<f64> {
        let mut c = ModelConfig::msdcanet(Variant::Custom).with_channels([8, 8, 16, 16, 16]);
        c.dilation_rates = vec![1, 2];
        build_msdcanet(c, 2).unwrap()
    }

    #[test]
    fn layer_aliases() {
        assert_eq!(resolve_layer("F3").unwrap(), "enc3");
        assert_eq!(resolve_layer("f5").unwrap(), "bottleneck");
        assert_eq!(resolve_layer("dec2").unwrap(), "dec2");
        assert!(resolve_layer("F9").is_err());
    }

    #[test]
    fn values_in_unit_interval() {
        let m = mini();
        let x = Tensor::create(&[1, 1, 32, 32], Init::Uniform { bound: 1.0, seed: 8 }).unwrap();
        for l in ["F3", "F4", "F5", "dec1"] {
            let hm = grad_cam(&m, &x, l).unwrap();
            assert_eq!(hm.upsampled.shape(), &[32, 32]);
            assert!(hm.values.data().iter().chain(hm.upsampled.data()).all(|v| (0.0..=1.0).contains(v)));
            if !hm.degenerate {
                assert_eq!(hm.values.data().iter().cloned().fold(f32::INFINITY, f32::min), 0.0);
            }
        }
    }

    #[test]
    fn zero_gradient_flagged() {
        let mut m = mini();
        zero_params(&mut m.store, &["head.weight"]);
        let x = Tensor::create(&[1, 1, 32, 32], Init::Uniform { bound: 1.0, seed: 8 }).unwrap();
        let hm = grad_cam(&m, &x, "F4").unwrap();
        assert!(hm.degenerate);
        assert!(hm.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn analytic_single_channel() {
        // score = mean(A * k) with constant k: dA = k / n, so w = k / n and
        // the map is ReLU(w A), normalised.
        let a = Tensor::from_vec(&[1, 1, 2, 2], vec![0.0, 1.0, 3.0, 2.0]).unwrap();
        let mut tape = Tape::<f64>::new();
        let av = tape.leaf(a, true);
        let k = tape.constant(Tensor::full(&[1, 1, 2, 2], 2.0).unwrap());
        let p = tape.mul(av, k).unwrap();
        let s = tape.mean(p);
        let hm = cam_from_tape(&mut tape, av, s, (2, 2), "toy").unwrap();
        let wa: Vec<f64> = [0.0, 1.0, 3.0, 2.0].iter().map(|v| 0.5 * v).collect();
        let expect: Vec<f32> = wa.iter().map(|v| (v / 1.5) as f32).collect();
        assert_eq!(hm.values.data(), expect.as_slice());
        assert_eq!(hm.upsampled, hm.values);
    }
}
