//! Central finite-difference verification of analytic gradients.

pub mod suite;

use rand::seq::index::sample;

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Init, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOpts {
    pub eps: f64,
    /// Check at most this many coordinates per input (seeded sample); `None` checks all.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOpts {
    fn default() -> Self {
        GradCheckOpts { eps: 1e-4, max_coords: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)` over
    /// all checked coordinates, with `floor = 1e-3 * max |analytic|` so that
    /// near-zero coordinates are judged against the gradient's overall scale.
    pub max_rel_err: f64,
    /// `(input index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Coordinates where the two one-sided slopes disagree, i.e. an
    /// activation or pooling kink lies within `eps`. These are scored
    /// against whichever one-sided slope is closer to the analytic value.
    pub kinks: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err < tol && self.kinks * MAX_KINK_SHARE <= self.checked
    }
}

/// At most one checked coordinate in this many may sit on a kink.
const MAX_KINK_SHARE: usize = 50;
const KINK_TOL: f64 = 1e-2;

fn eval<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if v.numel() != 1 {
        return Err(Error::NonScalarLoss(v.numel()));
    }
    Ok(v.data()[0])
}

/// Compares reverse-mode gradients of the scalar function `f` against
/// central differences `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)`.
///
/// When the forward and backward one-sided slopes disagree the coordinate is
/// counted as a kink and the analytic value must match one of the two sides.
pub fn finite_diff_check<F>(inputs: &[Tensor<f64>], opts: GradCheckOpts, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    let base = tape.value(out).data()[0];
    tape.backward(out)?;
    let analytic: Vec<Tensor<f64>> =
        vars.iter().zip(inputs).map(|(v, t)| tape.grad(*v).cloned().unwrap_or_else(|| t.map(|_| 0.0))).collect();
    drop(tape);

    if eval(&f, inputs)?.to_bits() != base.to_bits() {
        return Err(Error::invalid("function under check is not deterministic"));
    }

    let scale = analytic.iter().map(|g| g.max_abs()).fold(0.0, f64::max);
    let floor = (1e-3 * scale).max(1e-12);
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradCheckReport { max_rel_err: 0.0, worst: None, checked: 0, kinks: 0 };
    for (i, grad) in analytic.iter().enumerate() {
        let n = inputs[i].numel();
        let coords: Vec<usize> = match opts.max_coords {
            Some(k) if k < n => {
                let mut r = rng::stream(opts.seed, &format!("gradcheck/{i}"));
                let mut idx = sample(&mut r, n, k).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        };
        for j in coords {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + opts.eps;
            let fp = eval(&f, &work)?;
            work[i].data_mut()[j] = orig - opts.eps;
            let fm = eval(&f, &work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (fp - fm) / (2.0 * opts.eps);
            let a = grad.data()[j];
            let rel = |n: f64| (a - n).abs() / a.abs().max(n.abs()).max(floor);
            let (fwd, bwd) = ((fp - base) / opts.eps, (base - fm) / opts.eps);
            let mut err = rel(numeric);
            if (fwd - bwd).abs() > KINK_TOL * fwd.abs().max(bwd.abs()).max(floor) {
                report.kinks += 1;
                err = rel(fwd).min(rel(bwd));
            }
            report.checked += 1;
            if !(err <= report.max_rel_err) {
                report.max_rel_err = err;
                report.worst = Some((i, j));
            }
        }
    }
    Ok(report)
}

/// Reduces a tensor to a scalar through fixed random weights, so every output
/// coordinate contributes a distinct gradient.
pub fn weighted_sum(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let w = Tensor::create(tape.shape(y), Init::Uniform { bound: 1.0, seed })?;
    let wv = tape.constant(w);
    let p = tape.mul(y, wv)?;
    Ok(tape.sum(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn square_passes() {
        let x = Tensor::create(&[5], Init::Uniform { bound: 2.0, seed: 1 }).unwrap();
        let r = finite_diff_check(&[x], GradCheckOpts::default(), |t, v| {
            let sq = t.mul(v[0], v[0])?;
            Ok(t.sum(sq))
        })
        .unwrap();
        assert!(r.passes(1e-6), "{r:?}");
        assert_eq!(r.checked, 5);
    }

    #[test]
    fn broken_backward_rule_is_flagged() {
        // forward x^2 but claims d/dx = x instead of 2x
        let x = Tensor::create(&[6], Init::Uniform { bound: 2.0, seed: 2 }).unwrap();
        let r = finite_diff_check(&[x], GradCheckOpts::default(), |t, v| {
            let out = t.value(v[0]).map(|a| a * a);
            let y = t.custom(
                &[v[0]],
                out,
                Box::new(|ins, _out, g| {
                    let data = ins[0].data().iter().zip(g.data()).map(|(x, g)| x * g).collect();
                    vec![Tensor::from_vec(ins[0].shape(), data).unwrap()]
                }),
            );
            Ok(t.sum(y))
        })
        .unwrap();
        assert!(r.max_rel_err > 0.4, "{r:?}");
        assert!(!r.passes(1e-4));
    }

    #[test]
    fn non_deterministic_function_rejected() {
        use std::sync::atomic::{AtomicU64, Ordering};
        let calls = AtomicU64::new(0);
        let x = Tensor::<f64>::ones(&[2]).unwrap();
        let r = finite_diff_check(&[x], GradCheckOpts::default(), |t, v| {
            let k = calls.fetch_add(1, Ordering::Relaxed) as f64;
            let y = t.scale(v[0], 1.0 + k);
            Ok(t.sum(y))
        });
        assert!(r.is_err());
    }

    #[test]
    fn kink_within_eps_scored_one_sided() {
        let x = Tensor::from_vec(&[1], vec![5e-5]).unwrap();
        let r = finite_diff_check(&[x.clone()], GradCheckOpts::default(), |t, v| {
            let y = t.relu(v[0]);
            Ok(t.sum(y))
        })
        .unwrap();
        assert_eq!(r.kinks, 1);
        assert!(r.max_rel_err < 1e-9, "{r:?}");
        // one kink in one coordinate is more than the allowed share
        assert!(!r.passes(1e-4));

        // a gradient matching neither side still fails
        let r = finite_diff_check(&[x], GradCheckOpts::default(), |t, v| {
            let out = t.value(v[0]).map(|a| a.max(0.0));
            let y = t.custom(&[v[0]], out, Box::new(|_ins, _out, g| vec![g.map(|g| 0.25 * g)]));
            Ok(t.sum(y))
        })
        .unwrap();
        assert!(r.max_rel_err > 0.4, "{r:?}");
    }
}
