//! 2-D convolution (grouped, strided, dilated, zero padded) and the
//! per-position channel projection. Both lower to GEMM; the general case
//! goes through an im2col buffer per (sample, group).

use rayon::prelude::*;

use super::{BackCtx, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::parallel;
use crate::scalar::{gemm, MatRef, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvOpts {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for ConvOpts {
    fn default() -> Self {
        ConvOpts { stride: 1, padding: 0, dilation: 1, groups: 1 }
    }
}

impl ConvOpts {
    pub fn padded(padding: usize) -> Self {
        ConvOpts { padding, ..Self::default() }
    }

    /// Output extent for an input extent and kernel extent.
    pub fn out_extent(&self, input: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = input + 2 * self.padding;
        if padded < span || self.stride == 0 {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    opts: ConvOpts,
}

impl ConvGeom {
    fn cin_g(&self) -> usize {
        self.cin / self.opts.groups
    }
    fn cout_g(&self) -> usize {
        self.cout / self.opts.groups
    }
    fn k(&self) -> usize {
        self.cin_g() * self.kh * self.kw
    }
    fn p(&self) -> usize {
        self.ho * self.wo
    }
    /// 1x1, stride 1, no padding, single group: the input plane is its own im2col matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.opts.stride == 1 && self.opts.padding == 0 && self.opts.groups == 1
    }
}

fn geometry(x: &[usize], w: &[usize], b: Option<&[usize]>, opts: ConvOpts) -> Result<ConvGeom> {
    let [n, cin, h, wd] = x[..] else {
        return Err(Error::shape(format!("conv2d input must be N x C x H x W, got {x:?}")));
    };
    let [cout, cin_g, kh, kw] = w[..] else {
        return Err(Error::shape(format!("conv2d weight must be Cout x Cin/g x kh x kw, got {w:?}")));
    };
    let g = opts.groups;
    if g == 0 || opts.stride == 0 || opts.dilation == 0 {
        return Err(Error::invalid("stride, dilation and groups must be >= 1"));
    }
    if cin % g != 0 || cout % g != 0 || cin / g != cin_g {
        return Err(Error::shape(format!("channel/group mismatch: input {cin} channels, weight {w:?}, groups {g}")));
    }
    if let Some(bs) = b {
        if bs != [cout] {
            return Err(Error::shape(format!("conv2d bias must be [{cout}], got {bs:?}")));
        }
    }
    let ho = opts.out_extent(h, kh);
    let wo = opts.out_extent(wd, kw);
    let (Some(ho), Some(wo)) = (ho, wo) else {
        return Err(Error::shape(format!("conv2d output extent < 1 for input {h}x{wd}, kernel {kh}x{kw}, {opts:?}")));
    };
    Ok(ConvGeom { n, cin, h, w: wd, cout, kh, kw, ho, wo, opts })
}

/// Unfolds the `cin_g` channels of one sample/group into a `K x P` matrix.
fn im2col<T: Scalar>(x: &[T], gm: &ConvGeom, cols: &mut [T]) {
    let (h, w, ho, wo) = (gm.h as isize, gm.w, gm.ho, gm.wo);
    let (s, d, pad) = (gm.opts.stride, gm.opts.dilation as isize, gm.opts.padding as isize);
    let p = gm.p();
    for c in 0..gm.cin_g() {
        let plane = &x[c * gm.h * w..(c + 1) * gm.h * w];
        for ki in 0..gm.kh {
            for kj in 0..gm.kw {
                let row = (c * gm.kh + ki) * gm.kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                let xoff = kj as isize * d - pad;
                for oy in 0..ho {
                    let iy = (oy * s) as isize + ki as isize * d - pad;
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h {
                        drow.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in drow.iter_mut().enumerate() {
                        let ix = (ox * s) as isize + xoff;
                        *v = if ix >= 0 && (ix as usize) < w { src[ix as usize] } else { T::zero() };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates a `K x P` matrix back into image planes.
fn col2im<T: Scalar>(cols: &[T], gm: &ConvGeom, dx: &mut [T]) {
    let (h, w, ho, wo) = (gm.h as isize, gm.w, gm.ho, gm.wo);
    let (s, d, pad) = (gm.opts.stride, gm.opts.dilation as isize, gm.opts.padding as isize);
    let p = gm.p();
    for c in 0..gm.cin_g() {
        let plane = &mut dx[c * gm.h * w..(c + 1) * gm.h * w];
        for ki in 0..gm.kh {
            for kj in 0..gm.kw {
                let row = (c * gm.kh + ki) * gm.kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                let xoff = kj as isize * d - pad;
                for oy in 0..ho {
                    let iy = (oy * s) as isize + ki as isize * d - pad;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let drow = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * s) as isize + xoff;
                        if ix >= 0 && (ix as usize) < w {
                            drow[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

/// `out_n = W · X_n + b` for every sample, where `X_n` is `C x P`.
fn pointwise_forward<T: Scalar>(x: &[T], w: &[T], b: Option<&[T]>, n: usize, c: usize, cout: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * cout * p];
    let run = |(i, o): (usize, &mut [T])| {
        gemm(cout, c, p, MatRef::rm(w, c), MatRef::rm(&x[i * c * p..(i + 1) * c * p], p), T::zero(), o);
        if let Some(b) = b {
            for (row, &bv) in o.chunks_mut(p).zip(b) {
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    };
    if parallel::enabled() && n > 1 {
        out.par_chunks_mut(cout * p).enumerate().for_each(run);
    } else {
        out.chunks_mut(cout * p).enumerate().for_each(run);
    }
    out
}

/// Gradients of [`pointwise_forward`]: `(dx, dw, db)`.
#[allow(clippy::type_complexity)]
fn pointwise_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    g: &[T],
    n: usize,
    c: usize,
    cout: usize,
    p: usize,
    need_x: bool,
    need_w: bool,
    need_b: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>) {
    let dx = need_x.then(|| {
        let mut dx = vec![T::zero(); n * c * p];
        for i in 0..n {
            let gi = &g[i * cout * p..(i + 1) * cout * p];
            gemm(c, cout, p, MatRef::rm_t(w, c), MatRef::rm(gi, p), T::zero(), &mut dx[i * c * p..(i + 1) * c * p]);
        }
        dx
    });
    let dw = need_w.then(|| {
        let mut dw = vec![T::zero(); cout * c];
        for i in 0..n {
            let gi = &g[i * cout * p..(i + 1) * cout * p];
            let xi = &x[i * c * p..(i + 1) * c * p];
            gemm(cout, p, c, MatRef::rm(gi, p), MatRef::rm_t(xi, p), T::one(), &mut dw);
        }
        dw
    });
    let db = need_b.then(|| bias_grad(g, n, cout, p));
    (dx, dw, db)
}

fn bias_grad<T: Scalar>(g: &[T], n: usize, cout: usize, p: usize) -> Vec<T> {
    let mut db = vec![T::zero(); cout];
    for i in 0..n {
        for (co, acc) in db.iter_mut().enumerate() {
            let base = (i * cout + co) * p;
            *acc += g[base..base + p].iter().copied().sum::<T>();
        }
    }
    db
}

fn conv_forward<T: Scalar>(x: &[T], w: &[T], b: Option<&[T]>, gm: &ConvGeom) -> Vec<T> {
    if gm.is_pointwise() {
        return pointwise_forward(x, w, b, gm.n, gm.cin, gm.cout, gm.p());
    }
    let (k, p, cin_g, cout_g) = (gm.k(), gm.p(), gm.cin_g(), gm.cout_g());
    let in_plane = gm.h * gm.w;
    let mut out = vec![T::zero(); gm.n * gm.cout * p];
    let run = |(i, o): (usize, &mut [T])| {
        let mut cols = vec![T::zero(); k * p];
        for gi in 0..gm.opts.groups {
            let xs = &x[(i * gm.cin + gi * cin_g) * in_plane..(i * gm.cin + (gi + 1) * cin_g) * in_plane];
            im2col(xs, gm, &mut cols);
            let wg = &w[gi * cout_g * k..(gi + 1) * cout_g * k];
            let og = &mut o[gi * cout_g * p..(gi + 1) * cout_g * p];
            gemm(cout_g, k, p, MatRef::rm(wg, k), MatRef::rm(&cols, p), T::zero(), og);
        }
        if let Some(b) = b {
            for (row, &bv) in o.chunks_mut(p).zip(b) {
                row.iter_mut().for_each(|v| *v += bv);
            }
        }
    };
    if parallel::enabled() && gm.n > 1 {
        out.par_chunks_mut(gm.cout * p).enumerate().for_each(run);
    } else {
        out.chunks_mut(gm.cout * p).enumerate().for_each(run);
    }
    out
}

fn conv_flops(gm: &ConvGeom, bias: bool) -> u64 {
    let outputs = (gm.n * gm.cout * gm.p()) as u64;
    let macs = outputs * gm.k() as u64;
    2 * macs + if bias { outputs } else { 0 }
}

impl<T: Scalar> Tape<T> {
    /// Cross-correlation of `x [N, Cin, H, W]` with `w [Cout, Cin/groups, kh, kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, opts: ConvOpts) -> Result<Var> {
        let gm = geometry(self.shape(x), self.shape(w), b.map(|b| self.shape(b)), opts)?;
        let data = conv_forward(self.value(x).data(), self.value(w).data(), b.map(|b| self.value(b).data()), &gm);
        let out = Tensor::from_parts(vec![gm.n, gm.cout, gm.ho, gm.wo], data);
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(out, Op::Conv2d { x, w, b, geom: gm }, &inputs, conv_flops(&gm, b.is_some())))
    }

    /// Per-position linear map over channels: `w [Cout, C]`, `b [Cout]`.
    pub fn channel_projection(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, c, h, wd) = self.value(x).dims4()?;
        let ws = self.shape(w);
        if ws.len() != 2 || ws[1] != c {
            return Err(Error::shape(format!("projection weight must be [Cout, {c}], got {ws:?}")));
        }
        let cout = ws[0];
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::shape(format!("projection bias must be [{cout}], got {:?}", self.shape(b))));
            }
        }
        let p = h * wd;
        let data = pointwise_forward(self.value(x).data(), self.value(w).data(), b.map(|b| self.value(b).data()), n, c, cout, p);
        let out = Tensor::from_parts(vec![n, cout, h, wd], data);
        let outputs = (n * cout * p) as u64;
        let flops = 2 * outputs * c as u64 + if b.is_some() { outputs } else { 0 };
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(out, Op::Projection { x, w, b }, &inputs, flops))
    }
}

pub(super) fn conv_backward<T: Scalar>(
    ctx: &BackCtx<'_, T>,
    x: Var,
    w: Var,
    b: Option<Var>,
    gm: &ConvGeom,
    g: &Tensor<T>,
) -> Vec<(Var, Tensor<T>)> {
    let xv = ctx.val(x);
    let wv = ctx.val(w);
    let gd = g.data();
    let need_b = b.is_some_and(|b| ctx.needs(b));
    let mut out = Vec::with_capacity(3);

    if gm.is_pointwise() {
        let (dx, dw, db) = pointwise_backward(xv.data(), wv.data(), gd, gm.n, gm.cin, gm.cout, gm.p(), ctx.needs(x), ctx.needs(w), need_b);
        if let Some(dx) = dx {
            out.push((x, Tensor::from_parts(xv.shape().to_vec(), dx)));
        }
        if let Some(dw) = dw {
            out.push((w, Tensor::from_parts(wv.shape().to_vec(), dw)));
        }
        if let (Some(b), Some(db)) = (b, db) {
            out.push((b, Tensor::from_parts(vec![gm.cout], db)));
        }
        return out;
    }

    let (k, p, cin_g, cout_g) = (gm.k(), gm.p(), gm.cin_g(), gm.cout_g());
    let in_plane = gm.h * gm.w;
    let need_x = ctx.needs(x);
    let need_w = ctx.needs(w);
    let mut dx = need_x.then(|| vec![T::zero(); xv.numel()]);
    let mut dw = need_w.then(|| vec![T::zero(); wv.numel()]);
    let mut cols = vec![T::zero(); k * p];
    let mut dcols = vec![T::zero(); if need_x { k * p } else { 0 }];
    for i in 0..gm.n {
        for gi in 0..gm.opts.groups {
            let xrange = (i * gm.cin + gi * cin_g) * in_plane..(i * gm.cin + (gi + 1) * cin_g) * in_plane;
            let grange = (i * gm.cout + gi * cout_g) * p..(i * gm.cout + (gi + 1) * cout_g) * p;
            let gg = &gd[grange];
            let wg = &wv.data()[gi * cout_g * k..(gi + 1) * cout_g * k];
            if let Some(dw) = dw.as_mut() {
                im2col(&xv.data()[xrange.clone()], gm, &mut cols);
                gemm(cout_g, p, k, MatRef::rm(gg, p), MatRef::rm_t(&cols, p), T::one(), &mut dw[gi * cout_g * k..(gi + 1) * cout_g * k]);
            }
            if let Some(dx) = dx.as_mut() {
                gemm(k, cout_g, p, MatRef::rm_t(wg, k), MatRef::rm(gg, p), T::zero(), &mut dcols);
                col2im(&dcols, gm, &mut dx[xrange]);
            }
        }
    }
    if let Some(dx) = dx {
        out.push((x, Tensor::from_parts(xv.shape().to_vec(), dx)));
    }
    if let Some(dw) = dw {
        out.push((w, Tensor::from_parts(wv.shape().to_vec(), dw)));
    }
    if let (Some(b), true) = (b, need_b) {
        out.push((b, Tensor::from_parts(vec![gm.cout], bias_grad(gd, gm.n, gm.cout, p))));
    }
    out
}

pub(super) fn projection_backward<T: Scalar>(ctx: &BackCtx<'_, T>, x: Var, w: Var, b: Option<Var>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let xv = ctx.val(x);
    let wv = ctx.val(w);
    let (n, c, h, wd) = xv.dims4().expect("validated in forward");
    let cout = wv.shape()[0];
    let need_b = b.is_some_and(|b| ctx.needs(b));
    let (dx, dw, db) = pointwise_backward(xv.data(), wv.data(), g.data(), n, c, cout, h * wd, ctx.needs(x), ctx.needs(w), need_b);
    let mut out = Vec::with_capacity(3);
    if let Some(dx) = dx {
        out.push((x, Tensor::from_parts(xv.shape().to_vec(), dx)));
    }
    if let Some(dw) = dw {
        out.push((w, Tensor::from_parts(wv.shape().to_vec(), dw)));
    }
    if let (Some(b), Some(db)) = (b, db) {
        out.push((b, Tensor::from_parts(vec![cout], db)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Init;

    /// Direct sliding-window cross-correlation.
    fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, o: ConvOpts) -> Tensor<f64> {
        let (n, _, h, wd) = x.dims4().unwrap();
        let (cout, cin_g, kh, kw) = w.dims4().unwrap();
        let ho = (h + 2 * o.padding - o.dilation * (kh - 1) - 1) / o.stride + 1;
        let wo = (wd + 2 * o.padding - o.dilation * (kw - 1) - 1) / o.stride + 1;
        let cout_g = cout / o.groups;
        let mut out = vec![0.0; n * cout * ho * wo];
        for ni in 0..n {
            for co in 0..cout {
                let grp = co / cout_g;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b.map_or(0.0, |b| b.data()[co]);
                        for ci in 0..cin_g {
                            let c = grp * cin_g + ci;
                            for ki in 0..kh {
                                for kj in 0..kw {
                                    let iy = (oy * o.stride + ki * o.dilation) as isize - o.padding as isize;
                                    let ix = (ox * o.stride + kj * o.dilation) as isize - o.padding as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                        continue;
                                    }
                                    acc += x.at4(ni, c, iy as usize, ix as usize) * w.at4(co, ci, ki, kj);
                                }
                            }
                        }
                        out[((ni * cout + co) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        Tensor::from_vec(&[n, cout, ho, wo], out).unwrap()
    }

    fn run_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, o: ConvOpts) -> Tensor<f64> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let wv = tape.constant(w.clone());
        let bv = b.map(|b| tape.constant(b.clone()));
        let y = tape.conv2d(xv, wv, bv, o).unwrap();
        tape.value(y).clone()
    }

    fn assert_close(a: &Tensor<f64>, b: &Tensor<f64>, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let x = Tensor::<f64>::create(&[2, 1, 5, 4], Init::Uniform { bound: 1.0, seed: 1 }).unwrap();
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let w = Tensor::from_vec(&[1, 1, 3, 3], k).unwrap();
        assert_eq!(run_conv(&x, &w, None, ConvOpts::padded(1)), x);
    }

    #[test]
    fn all_ones_kernel_sums_taps() {
        let x = Tensor::<f64>::ones(&[1, 1, 5, 5]).unwrap();
        let w = Tensor::<f64>::ones(&[1, 1, 3, 3]).unwrap();
        let y = run_conv(&x, &w, None, ConvOpts::default());
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn dilated_grouped_matches_oracle() {
        let x = Tensor::<f64>::create(&[1, 2, 6, 6], Init::Uniform { bound: 1.0, seed: 11 }).unwrap();
        let w = Tensor::<f64>::create(&[4, 1, 3, 3], Init::Uniform { bound: 1.0, seed: 12 }).unwrap();
        let b = Tensor::<f64>::create(&[4], Init::Uniform { bound: 1.0, seed: 13 }).unwrap();
        let o = ConvOpts { stride: 1, padding: 2, dilation: 2, groups: 2 };
        assert_close(&run_conv(&x, &w, Some(&b), o), &conv_oracle(&x, &w, Some(&b), o), 1e-12);
        let o = ConvOpts { stride: 1, padding: 0, dilation: 2, groups: 2 };
        assert_close(&run_conv(&x, &w, None, o), &conv_oracle(&x, &w, None, o), 1e-12);
    }

    #[test]
    fn strided_and_depthwise_match_oracle() {
        let x = Tensor::<f64>::create(&[2, 3, 7, 8], Init::Uniform { bound: 1.0, seed: 21 }).unwrap();
        let w = Tensor::<f64>::create(&[5, 3, 3, 3], Init::Uniform { bound: 1.0, seed: 22 }).unwrap();
        let o = ConvOpts { stride: 2, padding: 1, dilation: 1, groups: 1 };
        assert_close(&run_conv(&x, &w, None, o), &conv_oracle(&x, &w, None, o), 1e-12);
        let dw = Tensor::<f64>::create(&[3, 1, 3, 3], Init::Uniform { bound: 1.0, seed: 23 }).unwrap();
        let o = ConvOpts { stride: 1, padding: 1, dilation: 1, groups: 3 };
        assert_close(&run_conv(&x, &dw, None, o), &conv_oracle(&x, &dw, None, o), 1e-12);
    }

    #[test]
    fn dilation_beyond_map_reads_zeros() {
        let x = Tensor::<f64>::create(&[1, 2, 4, 4], Init::Uniform { bound: 1.0, seed: 31 }).unwrap();
        let w = Tensor::<f64>::create(&[2, 2, 3, 3], Init::Uniform { bound: 1.0, seed: 32 }).unwrap();
        let o = ConvOpts { stride: 1, padding: 24, dilation: 24, groups: 1 };
        let y = run_conv(&x, &w, None, o);
        assert_eq!(y.shape(), &[1, 2, 4, 4]);
        assert_close(&y, &conv_oracle(&x, &w, None, o), 1e-12);
    }

    #[test]
    fn bad_geometry_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::ones(&[1, 3, 4, 4]).unwrap());
        let w = tape.constant(Tensor::ones(&[2, 2, 3, 3]).unwrap());
        assert!(tape.conv2d(x, w, None, ConvOpts { groups: 2, ..ConvOpts::default() }).is_err());
        let w5 = tape.constant(Tensor::ones(&[1, 3, 5, 5]).unwrap());
        assert!(tape.conv2d(x, w5, None, ConvOpts::default()).is_err());
    }

    #[test]
    fn projection_equals_one_by_one_conv() {
        for (seed, shape) in [(1u64, [1usize, 3, 4, 5]), (2, [2, 6, 3, 3]), (3, [3, 1, 2, 7])] {
            let c = shape[1];
            let x = Tensor::<f64>::create(&shape, Init::Uniform { bound: 1.0, seed }).unwrap();
            let w = Tensor::<f64>::create(&[4, c], Init::Uniform { bound: 1.0, seed: seed + 10 }).unwrap();
            let b = Tensor::<f64>::create(&[4], Init::Uniform { bound: 1.0, seed: seed + 20 }).unwrap();
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let wv = tape.constant(w.clone());
            let bv = tape.constant(b.clone());
            let p = tape.channel_projection(xv, wv, Some(bv)).unwrap();
            let w4 = w.clone().reshape(&[4, c, 1, 1]).unwrap();
            let conv = run_conv(&x, &w4, Some(&b), ConvOpts::default());
            assert_eq!(tape.value(p), &conv);
        }
    }

    #[test]
    fn projection_identity_and_constant() {
        let x = Tensor::<f64>::create(&[1, 3, 2, 2], Init::Uniform { bound: 1.0, seed: 5 }).unwrap();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let wv = tape.constant(Tensor::from_vec(&[3, 3], eye).unwrap());
        let y = tape.channel_projection(xv, wv, None).unwrap();
        assert_eq!(tape.value(y), &x);
        let wz = tape.constant(Tensor::zeros(&[2, 3]).unwrap());
        let bc = tape.constant(Tensor::full(&[2], 1.75).unwrap());
        let y = tape.channel_projection(xv, wz, Some(bc)).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 1.75));
    }

    #[test]
    fn flop_count_for_pointwise_conv() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::ones(&[1, 2, 4, 4]).unwrap());
        let w = tape.constant(Tensor::ones(&[3, 2, 1, 1]).unwrap());
        let b = tape.constant(Tensor::ones(&[3]).unwrap());
        tape.conv2d(x, w, Some(b), ConvOpts::default()).unwrap();
        assert_eq!(tape.flops(), 192 + 48);
    }
}
