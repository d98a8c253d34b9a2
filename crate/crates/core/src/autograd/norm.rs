//! Batch normalisation (per channel over N, H, W) and layer normalisation
//! (per position over channels).

use super::{BackCtx, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormConfig {
    pub eps: f64,
    pub momentum: f64,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig { eps: 1e-5, momentum: 0.1 }
    }
}

pub(crate) struct NormSaved<T> {
    x: Var,
    gamma: Var,
    beta: Var,
    xhat: Vec<T>,
    inv_std: Vec<T>,
    /// Statistics came from the batch itself, so they depend on `x`.
    batch_stats: bool,
}

fn check_affine<T: Scalar>(tape: &Tape<T>, gamma: Var, beta: Var, c: usize) -> Result<()> {
    if tape.shape(gamma) != [c] || tape.shape(beta) != [c] {
        return Err(Error::shape(format!("affine params must be [{c}], got {:?} and {:?}", tape.shape(gamma), tape.shape(beta))));
    }
    Ok(())
}

impl<T: Scalar> Tape<T> {
    /// Training mode normalises with batch statistics and folds them into the
    /// running estimates (unbiased variance); eval mode uses the running estimates.
    #[allow(clippy::too_many_arguments)]
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &mut [T],
        running_var: &mut [T],
        training: bool,
        cfg: NormConfig,
    ) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        check_affine(self, gamma, beta, c)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::shape("running statistics do not match channel count"));
        }
        let m = n * h * w;
        if m == 0 {
            return Err(Error::shape("batch_norm over an empty batch"));
        }
        let plane = h * w;
        let xs = self.value(x).data();
        let eps = T::from_f64_lossy(cfg.eps);
        let mut inv_std = vec![T::zero(); c];
        let mut mean = vec![T::zero(); c];
        if training {
            let mt = T::from_usize_lossy(m);
            let mom = T::from_f64_lossy(cfg.momentum);
            for ch in 0..c {
                let mut s = T::zero();
                for ni in 0..n {
                    let base = (ni * c + ch) * plane;
                    s += xs[base..base + plane].iter().copied().sum::<T>();
                }
                let mu = s / mt;
                let mut v = T::zero();
                for ni in 0..n {
                    let base = (ni * c + ch) * plane;
                    v += xs[base..base + plane].iter().map(|&x| (x - mu) * (x - mu)).sum::<T>();
                }
                let var_b = v / mt;
                mean[ch] = mu;
                inv_std[ch] = T::one() / (var_b + eps).sqrt();
                let unbiased = if m > 1 { v / T::from_usize_lossy(m - 1) } else { var_b };
                running_mean[ch] = (T::one() - mom) * running_mean[ch] + mom * mu;
                running_var[ch] = (T::one() - mom) * running_var[ch] + mom * unbiased;
            }
        } else {
            for ch in 0..c {
                mean[ch] = running_mean[ch];
                inv_std[ch] = T::one() / (running_var[ch] + eps).sqrt();
            }
        }
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = vec![T::zero(); xs.len()];
        let mut out = vec![T::zero(); xs.len()];
        for ni in 0..n {
            for ch in 0..c {
                let base = (ni * c + ch) * plane;
                for i in base..base + plane {
                    let xh = (xs[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    out[i] = gv[ch] * xh + bv[ch];
                }
            }
        }
        let flops = 4 * out.len() as u64;
        let out = Tensor::from_parts(vec![n, c, h, w], out);
        let saved = NormSaved { x, gamma, beta, xhat, inv_std, batch_stats: training };
        Ok(self.push(out, Op::BatchNorm(saved), &[x, gamma, beta], flops))
    }

    /// Layer normalisation over the channel axis at every spatial position.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (n, c, h, w) = self.value(x).dims4()?;
        check_affine(self, gamma, beta, c)?;
        let plane = h * w;
        let xs = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let eps = T::from_f64_lossy(eps);
        let ct = T::from_usize_lossy(c);
        let mut xhat = vec![T::zero(); xs.len()];
        let mut out = vec![T::zero(); xs.len()];
        let mut inv_std = vec![T::zero(); n * plane];
        for ni in 0..n {
            for p in 0..plane {
                let idx = |ch: usize| (ni * c + ch) * plane + p;
                let mu = (0..c).map(|ch| xs[idx(ch)]).sum::<T>() / ct;
                let var = (0..c).map(|ch| (xs[idx(ch)] - mu) * (xs[idx(ch)] - mu)).sum::<T>() / ct;
                let is = T::one() / (var + eps).sqrt();
                inv_std[ni * plane + p] = is;
                for ch in 0..c {
                    let xh = (xs[idx(ch)] - mu) * is;
                    xhat[idx(ch)] = xh;
                    out[idx(ch)] = gv[ch] * xh + bv[ch];
                }
            }
        }
        let flops = 4 * out.len() as u64;
        let out = Tensor::from_parts(vec![n, c, h, w], out);
        let saved = NormSaved { x, gamma, beta, xhat, inv_std, batch_stats: true };
        Ok(self.push(out, Op::LayerNorm(saved), &[x, gamma, beta], flops))
    }
}

fn affine_grads<T: Scalar>(ctx: &BackCtx<'_, T>, s: &NormSaved<T>, g: &Tensor<T>, out: &mut Vec<(Var, Tensor<T>)>) {
    let (n, c, h, w) = g.dims4().expect("rank 4");
    let plane = h * w;
    let (need_g, need_b) = (ctx.needs(s.gamma), ctx.needs(s.beta));
    if !need_g && !need_b {
        return;
    }
    let mut dg = vec![T::zero(); c];
    let mut db = vec![T::zero(); c];
    for ni in 0..n {
        for ch in 0..c {
            let base = (ni * c + ch) * plane;
            for i in base..base + plane {
                dg[ch] += g.data()[i] * s.xhat[i];
                db[ch] += g.data()[i];
            }
        }
    }
    if need_g {
        out.push((s.gamma, Tensor::from_parts(vec![c], dg)));
    }
    if need_b {
        out.push((s.beta, Tensor::from_parts(vec![c], db)));
    }
}

pub(super) fn batch_norm_backward<T: Scalar>(ctx: &BackCtx<'_, T>, s: &NormSaved<T>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let mut out = Vec::with_capacity(3);
    let (n, c, h, w) = g.dims4().expect("rank 4");
    let plane = h * w;
    if ctx.needs(s.x) {
        let gamma = ctx.val(s.gamma).data();
        let gd = g.data();
        let mut dx = vec![T::zero(); gd.len()];
        for ch in 0..c {
            let scale = gamma[ch] * s.inv_std[ch];
            if s.batch_stats {
                let m = T::from_usize_lossy(n * plane);
                let mut sum_g = T::zero();
                let mut sum_gx = T::zero();
                for ni in 0..n {
                    let base = (ni * c + ch) * plane;
                    for i in base..base + plane {
                        sum_g += gd[i];
                        sum_gx += gd[i] * s.xhat[i];
                    }
                }
                for ni in 0..n {
                    let base = (ni * c + ch) * plane;
                    for i in base..base + plane {
                        dx[i] = scale * (gd[i] - sum_g / m - s.xhat[i] * sum_gx / m);
                    }
                }
            } else {
                for ni in 0..n {
                    let base = (ni * c + ch) * plane;
                    for i in base..base + plane {
                        dx[i] = scale * gd[i];
                    }
                }
            }
        }
        out.push((s.x, Tensor::from_parts(g.shape().to_vec(), dx)));
    }
    affine_grads(ctx, s, g, &mut out);
    out
}

pub(super) fn layer_norm_backward<T: Scalar>(ctx: &BackCtx<'_, T>, s: &NormSaved<T>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let mut out = Vec::with_capacity(3);
    let (n, c, h, w) = g.dims4().expect("rank 4");
    let plane = h * w;
    if ctx.needs(s.x) {
        let gamma = ctx.val(s.gamma).data();
        let gd = g.data();
        let ct = T::from_usize_lossy(c);
        let mut dx = vec![T::zero(); gd.len()];
        for ni in 0..n {
            for p in 0..plane {
                let idx = |ch: usize| (ni * c + ch) * plane + p;
                let mut sum_d = T::zero();
                let mut sum_dx = T::zero();
                for ch in 0..c {
                    let d = gd[idx(ch)] * gamma[ch];
                    sum_d += d;
                    sum_dx += d * s.xhat[idx(ch)];
                }
                let is = s.inv_std[ni * plane + p];
                for ch in 0..c {
                    let d = gd[idx(ch)] * gamma[ch];
                    dx[idx(ch)] = is * (d - sum_d / ct - s.xhat[idx(ch)] * sum_dx / ct);
                }
            }
        }
        out.push((s.x, Tensor::from_parts(g.shape().to_vec(), dx)));
    }
    affine_grads(ctx, s, g, &mut out);
    out
}
