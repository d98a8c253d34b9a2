//! Shape-moving operators: axial shift, 2x2 max pooling, bilinear x2
//! up-sampling, channel concatenation and channel-broadcast gating.

use super::{BackCtx, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Width,
    Height,
}

/// First channel of group `g` when `c` channels are split into `groups`
/// contiguous groups whose sizes differ by at most one.
pub(crate) fn group_start(c: usize, groups: usize, g: usize) -> usize {
    g * c / groups
}

/// Translates each channel group along `axis`; vacated cells become zero.
fn shift_kernel<T: Scalar>(src: &[T], shape: (usize, usize, usize, usize), axis: Axis, offsets: &[isize], negate: bool) -> Vec<T> {
    let (n, c, h, w) = shape;
    let mut out = vec![T::zero(); src.len()];
    let groups = offsets.len();
    for g in 0..groups {
        let off = if negate { -offsets[g] } else { offsets[g] };
        for ch in group_start(c, groups, g)..group_start(c, groups, g + 1) {
            for ni in 0..n {
                let base = (ni * c + ch) * h * w;
                let sp = &src[base..base + h * w];
                let dp = &mut out[base..base + h * w];
                match axis {
                    Axis::Width => {
                        for y in 0..h {
                            for x in 0..w {
                                let sx = x as isize - off;
                                if sx >= 0 && (sx as usize) < w {
                                    dp[y * w + x] = sp[y * w + sx as usize];
                                }
                            }
                        }
                    }
                    Axis::Height => {
                        for y in 0..h {
                            let sy = y as isize - off;
                            if sy >= 0 && (sy as usize) < h {
                                let sy = sy as usize;
                                dp[y * w..(y + 1) * w].copy_from_slice(&sp[sy * w..(sy + 1) * w]);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Per-axis bilinear source taps for x2 up-sampling with half-pixel centres.
fn upsample_taps(n: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            let l1 = src - i0 as f64;
            (i0, i1, 1.0 - l1, l1)
        })
        .collect()
}

impl<T: Scalar> Tape<T> {
    /// Shifts channel group `g` by `offsets[g]` cells along `axis`.
    pub fn axial_shift(&mut self, x: Var, axis: Axis, offsets: &[isize]) -> Result<Var> {
        let dims = self.value(x).dims4()?;
        let (_, c, h, w) = dims;
        if offsets.is_empty() || c < offsets.len() {
            return Err(Error::invalid(format!("{} shift groups do not fit {c} channels", offsets.len())));
        }
        let extent = if axis == Axis::Width { w } else { h };
        if let Some(o) = offsets.iter().find(|o| o.unsigned_abs() >= extent) {
            return Err(Error::invalid(format!("shift offset {o} exceeds extent {extent}")));
        }
        let data = shift_kernel(self.value(x).data(), dims, axis, offsets, false);
        let out = Tensor::from_parts(self.shape(x).to_vec(), data);
        Ok(self.push(out, Op::AxialShift { x, axis, offsets: offsets.to_vec() }, &[x], 0))
    }

    /// 2x2 max pooling with stride 2.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(format!("maxpool2 needs even extents, got {h}x{w}")));
        }
        let (ho, wo) = (h / 2, w / 2);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let i00 = base + 2 * oy * w + 2 * ox;
                    let mut best = i00;
                    // row-major window order; strict comparison keeps the first maximum
                    for idx in [i00 + 1, i00 + w, i00 + w + 1] {
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let flops = 3 * out.len() as u64;
        let out = Tensor::from_parts(vec![n, c, ho, wo], out);
        Ok(self.push(out, Op::MaxPool2 { x, argmax }, &[x], flops))
    }

    /// Bilinear x2 up-sampling, half-pixel centres (align_corners = false).
    pub fn upsample_bilinear2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        let ty = upsample_taps(h);
        let tx = upsample_taps(w);
        let src = self.value(x).data();
        let (ho, wo) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); n * c * ho * wo];
        for plane in 0..n * c {
            let sp = &src[plane * h * w..(plane + 1) * h * w];
            let dp = &mut out[plane * ho * wo..(plane + 1) * ho * wo];
            for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
                let (wy0, wy1) = (T::from_f64_lossy(wy0), T::from_f64_lossy(wy1));
                for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                    let (wx0, wx1) = (T::from_f64_lossy(wx0), T::from_f64_lossy(wx1));
                    let top = sp[y0 * w + x0] * wx0 + sp[y0 * w + x1] * wx1;
                    let bot = sp[y1 * w + x0] * wx0 + sp[y1 * w + x1] * wx1;
                    dp[oy * wo + ox] = top * wy0 + bot * wy1;
                }
            }
        }
        let flops = 7 * out.len() as u64;
        let out = Tensor::from_parts(vec![n, c, ho, wo], out);
        Ok(self.push(out, Op::Upsample2 { x }, &[x], flops))
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::shape("concat of zero tensors"))?;
        let (n, _, h, w) = self.value(*first).dims4()?;
        let mut c_total = 0;
        for p in parts {
            let (pn, pc, ph, pw) = self.value(*p).dims4()?;
            if (pn, ph, pw) != (n, h, w) {
                return Err(Error::shape(format!("concat mismatch: {:?} vs {:?}", self.shape(*p), self.shape(*first))));
            }
            c_total += pc;
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * c_total * plane);
        for ni in 0..n {
            for p in parts {
                let t = self.value(*p);
                let pc = t.shape()[1];
                out.extend_from_slice(&t.data()[ni * pc * plane..(ni + 1) * pc * plane]);
            }
        }
        let out = Tensor::from_parts(vec![n, c_total, h, w], out);
        Ok(self.push(out, Op::Concat(parts.to_vec()), parts, 0))
    }

    /// `x [N,C,H,W] * a [N,1,H,W]`, broadcasting `a` over channels.
    pub fn mul_channel(&mut self, x: Var, a: Var) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        if self.shape(a) != [n, 1, h, w] {
            return Err(Error::shape(format!("gate {:?} does not broadcast over {:?}", self.shape(a), self.shape(x))));
        }
        let plane = h * w;
        let xs = self.value(x).data();
        let as_ = self.value(a).data();
        let mut out = Vec::with_capacity(xs.len());
        for ni in 0..n {
            let gate = &as_[ni * plane..(ni + 1) * plane];
            for ch in 0..c {
                let base = (ni * c + ch) * plane;
                out.extend(xs[base..base + plane].iter().zip(gate).map(|(&v, &g)| v * g));
            }
        }
        let flops = out.len() as u64;
        let out = Tensor::from_parts(vec![n, c, h, w], out);
        Ok(self.push(out, Op::MulChannel(x, a), &[x, a], flops))
    }
}

pub(super) fn shift_backward<T: Scalar>(
    ctx: &BackCtx<'_, T>,
    x: Var,
    axis: Axis,
    offsets: &[isize],
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let dims = ctx.val(x).dims4().expect("validated in forward");
    let data = shift_kernel(g.data(), dims, axis, offsets, true);
    vec![(x, Tensor::from_parts(g.shape().to_vec(), data))]
}

pub(super) fn maxpool_backward<T: Scalar>(ctx: &BackCtx<'_, T>, x: Var, argmax: &[usize], g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let xv = ctx.val(x);
    let mut dx = vec![T::zero(); xv.numel()];
    for (&idx, &gv) in argmax.iter().zip(g.data()) {
        dx[idx] += gv;
    }
    vec![(x, Tensor::from_parts(xv.shape().to_vec(), dx))]
}

pub(super) fn upsample_backward<T: Scalar>(ctx: &BackCtx<'_, T>, x: Var, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let xv = ctx.val(x);
    let (n, c, h, w) = xv.dims4().expect("validated in forward");
    let ty = upsample_taps(h);
    let tx = upsample_taps(w);
    let (ho, wo) = (2 * h, 2 * w);
    let mut dx = vec![T::zero(); xv.numel()];
    for plane in 0..n * c {
        let gp = &g.data()[plane * ho * wo..(plane + 1) * ho * wo];
        let dp = &mut dx[plane * h * w..(plane + 1) * h * w];
        for (oy, &(y0, y1, wy0, wy1)) in ty.iter().enumerate() {
            let (wy0, wy1) = (T::from_f64_lossy(wy0), T::from_f64_lossy(wy1));
            for (ox, &(x0, x1, wx0, wx1)) in tx.iter().enumerate() {
                let (wx0, wx1) = (T::from_f64_lossy(wx0), T::from_f64_lossy(wx1));
                let gv = gp[oy * wo + ox];
                dp[y0 * w + x0] += gv * wy0 * wx0;
                dp[y0 * w + x1] += gv * wy0 * wx1;
                dp[y1 * w + x0] += gv * wy1 * wx0;
                dp[y1 * w + x1] += gv * wy1 * wx1;
            }
        }
    }
    vec![(x, Tensor::from_parts(xv.shape().to_vec(), dx))]
}

pub(super) fn concat_backward<T: Scalar>(ctx: &BackCtx<'_, T>, parts: &[Var], g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let (n, c_total, h, w) = g.dims4().expect("rank 4");
    let plane = h * w;
    let mut out = Vec::with_capacity(parts.len());
    let mut c_off = 0;
    for p in parts {
        let pc = ctx.val(*p).shape()[1];
        if ctx.needs(*p) {
            let mut d = Vec::with_capacity(n * pc * plane);
            for ni in 0..n {
                let base = (ni * c_total + c_off) * plane;
                d.extend_from_slice(&g.data()[base..base + pc * plane]);
            }
            out.push((*p, Tensor::from_parts(ctx.val(*p).shape().to_vec(), d)));
        }
        c_off += pc;
    }
    out
}

pub(super) fn mul_channel_backward<T: Scalar>(ctx: &BackCtx<'_, T>, x: Var, a: Var, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let xv = ctx.val(x);
    let av = ctx.val(a);
    let (n, c, h, w) = xv.dims4().expect("rank 4");
    let plane = h * w;
    let mut out = Vec::with_capacity(2);
    if ctx.needs(x) {
        let mut dx = Vec::with_capacity(xv.numel());
        for ni in 0..n {
            let gate = &av.data()[ni * plane..(ni + 1) * plane];
            for ch in 0..c {
                let base = (ni * c + ch) * plane;
                dx.extend(g.data()[base..base + plane].iter().zip(gate).map(|(&gv, &a)| gv * a));
            }
        }
        out.push((x, Tensor::from_parts(xv.shape().to_vec(), dx)));
    }
    if ctx.needs(a) {
        let mut da = vec![T::zero(); av.numel()];
        for ni in 0..n {
            for ch in 0..c {
                let base = (ni * c + ch) * plane;
                for i in 0..plane {
                    da[ni * plane + i] += g.data()[base + i] * xv.data()[base + i];
                }
            }
        }
        out.push((a, Tensor::from_parts(av.shape().to_vec(), da)));
    }
    out
}
