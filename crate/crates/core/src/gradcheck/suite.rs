//! The finite-difference suite: every differentiable op, the four blocks
//! and a miniature network, each over several seeds and shapes.

use crate::autograd::{Activation, Axis, ConvOpts, NormConfig, Tape, Var};
use crate::blocks::{AttentionGate, DcBlock, ResAspp, TokMlpBlock, DEFAULT_SHIFTS};
use crate::error::Result;
use crate::layers::Builder;
use crate::network::{build_msdcanet, ModelConfig, Variant};
use crate::params::{ParamStore, Session};
use crate::rng::derive_seed;
use crate::tensor::{Init, Tensor};
use crate::trainer::{bce_dice_loss, LossWeights};

use super::{finite_diff_check, weighted_sum, GradCheckOpts, GradCheckReport};

pub const OP_TOL: f64 = 1e-4;
pub const NETWORK_TOL: f64 = 1e-3;
pub const SUITE_SEEDS: [u64; 3] = [11, 22, 33];
const EPS: f64 = 1e-6;

pub struct Case {
    pub name: &'static str,
    pub tol: f64,
    run: fn(u64) -> Result<GradCheckReport>,
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub name: &'static str,
    pub seed: u64,
    pub tol: f64,
    pub report: GradCheckReport,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.report.passes(self.tol)
    }
}

fn rand(shape: &[usize], seed: u64, label: &str) -> Tensor<f64> {
    Tensor::create(shape, Init::Uniform { bound: 1.0, seed: derive_seed(seed, label) }).expect("valid shape")
}

/// Uniform values with magnitude in `[0.2, 1.2)`, clear of kinks at zero.
fn away(shape: &[usize], seed: u64, label: &str) -> Tensor<f64> {
    rand(shape, seed, label).map(|v| v + 0.2 * v.signum())
}

/// `(n, c, h, w)` varied with the seed.
fn dims(seed: u64) -> (usize, usize, usize, usize) {
    let k = (seed % 3) as usize;
    (1 + k % 2, 2 + k, 4 + 2 * k, 6 + 2 * (2 - k))
}

fn opts(seed: u64, max_coords: Option<usize>) -> GradCheckOpts {
    GradCheckOpts { eps: EPS, max_coords, seed }
}

fn check<F>(inputs: Vec<Tensor<f64>>, seed: u64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    finite_diff_check(&inputs, opts(seed, Some(96)), |t, v| {
        let y = f(t, v)?;
        weighted_sum(t, y, derive_seed(seed, "weights"))
    })
}

/// Checks a parameterised module: input tensors come first, then every
/// parameter of `store`, bound onto the tape in store order.
fn check_module<F>(seed: u64, xs: Vec<Tensor<f64>>, store: ParamStore<f64>, max_coords: usize, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Session<'_, f64>, &[Var]) -> Result<Var>,
{
    let n_x = xs.len();
    let mut inputs = xs;
    // Perturb every parameter so zero-initialised biases and unit norms
    // are not special points.
    let mut store = store;
    for (i, p) in store.params_mut().iter_mut().enumerate() {
        let jitter = rand(p.value.shape(), seed, &format!("param{i}"));
        let scale = 0.1f64.max(p.value.max_abs());
        p.value.data_mut().iter_mut().zip(jitter.data()).for_each(|(v, j)| *v += 0.1 * scale * j);
        inputs.push(p.value.clone());
    }
    let ids: Vec<_> = store.param_ids().collect();
    finite_diff_check(&inputs, opts(seed, Some(max_coords)), |t, v| {
        let mut st = store.clone();
        let y = {
            let mut s = Session::new(t, &mut st, true);
            for (k, id) in ids.iter().enumerate() {
                s.bind(*id, v[n_x + k]);
            }
            f(&mut s, &v[..n_x])?
        };
        weighted_sum(t, y, derive_seed(seed, "weights"))
    })
}

fn binary(x: Tensor<f64>, seed: u64, op: fn(&mut Tape<f64>, Var, Var) -> Result<Var>, positive_rhs: bool) -> Result<GradCheckReport> {
    let shape = x.shape().to_vec();
    let b = if positive_rhs { rand(&shape, seed, "rhs").map(|v| 1.5 + v) } else { rand(&shape, seed, "rhs") };
    check(vec![x, b], seed, move |t, v| op(t, v[0], v[1]))
}

fn x4(seed: u64) -> Tensor<f64> {
    let (n, c, h, w) = dims(seed);
    rand(&[n, c, h, w], seed, "x")
}

macro_rules! case {
    ($name:expr, $tol:expr, $f:expr) => {
        Case { name: $name, tol: $tol, run: $f }
    };
}

pub fn cases() -> Vec<Case> {
    vec![
        case!("op/add", OP_TOL, |s| binary(x4(s), s, |t, a, b| t.add(a, b), false)),
        case!("op/sub", OP_TOL, |s| binary(x4(s), s, |t, a, b| t.sub(a, b), false)),
        case!("op/mul", OP_TOL, |s| binary(x4(s), s, |t, a, b| t.mul(a, b), false)),
        case!("op/div", OP_TOL, |s| binary(x4(s), s, |t, a, b| t.div(a, b), true)),
        case!("op/scale", OP_TOL, |s| check(vec![x4(s)], s, |t, v| Ok(t.scale(v[0], -1.7)))),
        case!("op/add_scalar", OP_TOL, |s| check(vec![x4(s)], s, |t, v| Ok(t.add_scalar(v[0], 0.3)))),
        case!("op/sum", OP_TOL, |s| check(vec![x4(s)], s, |t, v| {
            let sq = t.mul(v[0], v[0])?;
            Ok(t.sum(sq))
        })),
        case!("op/mean", OP_TOL, |s| check(vec![x4(s)], s, |t, v| {
            let sq = t.mul(v[0], v[0])?;
            Ok(t.mean(sq))
        })),
        case!("op/relu", OP_TOL, |s| {
            let (n, c, h, w) = dims(s);
            check(vec![away(&[n, c, h, w], s, "x")], s, |t, v| Ok(t.activation(v[0], Activation::Relu)))
        }),
        case!("op/gelu", OP_TOL, |s| check(vec![x4(s).map(|v| 3.0 * v)], s, |t, v| Ok(t.gelu(v[0])))),
        case!("op/sigmoid", OP_TOL, |s| check(vec![x4(s).map(|v| 4.0 * v)], s, |t, v| Ok(t.sigmoid(v[0])))),
        case!("op/bce_with_logits", OP_TOL, |s| {
            let x = x4(s).map(|v| 3.0 * v);
            let target = rand(x.shape(), s, "target").map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            finite_diff_check(&[x], opts(s, Some(96)), move |t, v| {
                let y = t.constant(target.clone());
                t.bce_with_logits(v[0], y)
            })
        }),
        case!("op/bce_dice_loss", OP_TOL, |s| {
            let x = x4(s).map(|v| 3.0 * v);
            let target = rand(x.shape(), s, "target").map(|v| if v > 0.0 { 1.0 } else { 0.0 });
            finite_diff_check(&[x], opts(s, Some(96)), move |t, v| {
                let y = t.constant(target.clone());
                bce_dice_loss(t, v[0], y, LossWeights::default())
            })
        }),
        case!("op/conv2d", OP_TOL, |s| {
            let (n, c, h, w) = dims(s);
            let x = rand(&[n, c, h, w], s, "x");
            let k = rand(&[3, c, 3, 3], s, "w");
            let b = rand(&[3], s, "b");
            check(vec![x, k, b], s, |t, v| t.conv2d(v[0], v[1], Some(v[2]), ConvOpts::padded(1)))
        }),
        case!("op/conv2d_strided", OP_TOL, |s| {
            let (n, c, h, w) = dims(s);
            let x = rand(&[n, c, h, w], s, "x");
            let k = rand(&[2, c, 3, 3], s, "w");
            let o = ConvOpts { stride: 2, padding: 1, ..ConvOpts::default() };
            check(vec![x, k], s, move |t, v| t.conv2d(v[0], v[1], None, o))
        }),
        case!("op/conv2d_dilated", OP_TOL, |s| {
            let (n, c, h, w) = dims(s);
            let x = rand(&[n, c, h, w], s, "x");
            let k = rand(&[2, c, 3, 3], s, "w");
            let d = 1 + (s % 3) as usize;
            let o = ConvOpts { padding: d, dilation: d, ..ConvOpts::default() };
            check(vec![x, k], s, move |t, v| t.conv2d(v[0], v[1], None, o))
        }),
        case!("op/conv2d_depthwise", OP_TOL, |s| {
            let (n, c, h, w) = dims(s);
            let x = rand(&[n, c, h, w], s, "x");
            let k = rand(&[c, 1, 3, 3], s, "w");
            let b = rand(&[c], s, "b");
            let o = ConvOpts { padding: 1, groups: c, ..ConvOpts::default() };
            check(vec![x, k, b], s, move |t, v| t.conv2d(v[0], v[1], Some(v[2]), o))
        }),
        case!("op/channel_projection", OP_TOL, |s| {
            let (n, c, h, w) = dims(s);
            let x = rand(&[n, c, h, w], s, "x");
            let k = rand(&[c + 1, c], s, "w");
            let b = rand(&[c + 1], s, "b");
            check(vec![x, k, b], s, |t, v| t.channel_projection(v[0], v[1], Some(v[2])))
        }),
        case!("op/axial_shift_width", OP_TOL, |s| {
            let (n, _, h, w) = dims(s);
            check(vec![rand(&[n, 7, h, w], s, "x")], s, |t, v| t.axial_shift(v[0], Axis::Width, &DEFAULT_SHIFTS))
        }),
        case!("op/axial_shift_height", OP_TOL, |s| {
            let (n, _, h, w) = dims(s);
            check(vec![rand(&[n, 5, h, w], s, "x")], s, |t, v| t.axial_shift(v[0], Axis::Height, &DEFAULT_SHIFTS))
        }),
        case!("op/maxpool2", OP_TOL, |s| check(vec![x4(s)], s, |t, v| t.maxpool2(v[0]))),
        case!("op/upsample_bilinear2", OP_TOL, |s| check(vec![x4(s)], s, |t, v| t.upsample_bilinear2(v[0]))),
        case!("op/concat", OP_TOL, |s| {
            let (n, c, h, w) = dims(s);
            let a = rand(&[n, c, h, w], s, "a");
            let b = rand(&[n, 1, h, w], s, "b");
            check(vec![a, b], s, |t, v| t.concat(&[v[0], v[1]]))
        }),
        case!("op/mul_channel", OP_TOL, |s| {
            let (n, c, h, w) = dims(s);
            let a = rand(&[n, c, h, w], s, "a");
            let g = rand(&[n, 1, h, w], s, "g");
            check(vec![a, g], s, |t, v| t.mul_channel(v[0], v[1]))
        }),
        case!("op/batch_norm", OP_TOL, |s| {
            let (n, c, h, w) = dims(s);
            let x = rand(&[n, c, h, w], s, "x").map(|v| 2.0 * v + 0.5);
            let g = rand(&[c], s, "gamma").map(|v| 1.0 + 0.5 * v);
            let b = rand(&[c], s, "beta");
            check(vec![x, g, b], s, move |t, v| {
                let (mut rm, mut rv) = (vec![0.0; c], vec![1.0; c]);
                t.batch_norm(v[0], v[1], v[2], &mut rm, &mut rv, true, NormConfig::default())
            })
        }),
        case!("op/layer_norm", OP_TOL, |s| {
            let (n, c, h, w) = dims(s);
            let x = rand(&[n, c + 1, h, w], s, "x").map(|v| 2.0 * v);
            let g = rand(&[c + 1], s, "gamma").map(|v| 1.0 + 0.5 * v);
            let b = rand(&[c + 1], s, "beta");
            check(vec![x, g, b], s, |t, v| t.layer_norm(v[0], v[1], v[2], 1e-5))
        }),
        case!("block/dc", OP_TOL, |s| {
            let k = (s % 3) as usize;
            let (cin, width, hw) = (2 + k, 6 + 2 * k, 5 + k);
            let mut store = ParamStore::new();
            let blk = DcBlock::new(&mut store, &Builder::new(s), "dc", cin, width, true)?;
            let x = rand(&[2, cin, hw, hw], s, "x");
            check_module(s, vec![x], store, 48, move |ss, v| blk.forward(ss, v[0]))
        }),
        case!("block/attention_gate", OP_TOL, |s| {
            let k = (s % 3) as usize;
            let (cx, cg, hw) = (2 + 2 * k, 3 + k, 4 + k);
            let mut store = ParamStore::new();
            let ag = AttentionGate::new(&mut store, &Builder::new(s), "ag", cx, cg)?;
            let x = rand(&[1 + k % 2, cx, hw, hw], s, "x");
            let g = rand(&[1 + k % 2, cg, hw, hw], s, "g");
            check_module(s, vec![x, g], store, 64, move |ss, v| ag.forward(ss, v[0], v[1]))
        }),
        case!("block/tok_mlp", OP_TOL, |s| {
            let k = (s % 3) as usize;
            let (e, h, w) = (5 + k, 5 + k, 6);
            let mut store = ParamStore::new();
            let blk = TokMlpBlock::new(&mut store, &Builder::new(s), "tok", e, &DEFAULT_SHIFTS)?;
            let x = rand(&[1 + k % 2, e, h, w], s, "x");
            check_module(s, vec![x], store, 48, move |ss, v| blk.forward(ss, v[0]))
        }),
        case!("block/res_aspp", OP_TOL, |s| {
            let rates: &[&[usize]] = &[&[1, 2], &[1, 2, 3, 4], &[2, 4, 6]];
            let r = rates[(s % 3) as usize];
            let mut store = ParamStore::new();
            let blk = ResAspp::new(&mut store, &Builder::new(s), "aspp", 8, r)?;
            let x = rand(&[2, 8, 6, 6], s, "x");
            check_module(s, vec![x], store, 48, move |ss, v| blk.forward(ss, v[0]))
        }),
        case!("network/miniature", NETWORK_TOL, |s| {
            let mut cfg = ModelConfig::msdcanet(Variant::Custom).with_channels([8, 8, 16, 16, 16]);
            cfg.dilation_rates = vec![1, 2, 3, 4];
            let m = build_msdcanet::<f64>(cfg, s)?;
            let x = rand(&[1, 1, 32, 32], s, "x");
            let net = m.net.clone();
            check_module(s, vec![x], m.store, 12, move |ss, v| net.forward(ss, v[0]))
        }),
    ]
}

/// Runs every case whose name contains `filter` (all when `None`) once per seed.
pub fn run_suite(filter: Option<&str>, seeds: &[u64]) -> Result<Vec<CaseResult>> {
    let mut out = Vec::new();
    for case in cases().into_iter().filter(|c| filter.is_none_or(|f| c.name.contains(f))) {
        for &seed in seeds {
            let report = (case.run)(seed)?;
            out.push(CaseResult { name: case.name, seed, tol: case.tol, report });
        }
    }
    Ok(out)
}
