use crate::autograd::{Axis, ConvOpts, Var};
use crate::error::{Error, Result};
use crate::layers::{Builder, Conv2d, LayerNorm, Linear};
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;

/// Five channel groups shifted by -2..=2 cells.
pub const DEFAULT_SHIFTS: [isize; 5] = [-2, -1, 0, 1, 2];

/// Tokenized MLP block. With `F` the input tokens:
///
/// ```text
/// T_W = Proj(Shift_W(Proj(F)))
/// T   = GELU(DWConv(MLP(T_W)))
/// T_H = Proj(Shift_H(Proj(T)))
/// X   = Proj(LN(F + MLP(T_H)))
/// ```
///
/// Every projection and MLP keeps the embedding width `E`; DWConv is a 3x3
/// depthwise convolution.
#[derive(Debug, Clone)]
pub struct TokMlpBlock {
    pub proj_w_in: Linear,
    pub proj_w_out: Linear,
    pub mlp_in: Linear,
    pub dwconv: Conv2d,
    pub proj_h_in: Linear,
    pub proj_h_out: Linear,
    pub mlp_out: Linear,
    pub norm: LayerNorm,
    pub proj_out: Linear,
    pub offsets: Vec<isize>,
}

impl TokMlpBlock {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, b: &Builder, name: &str, embed: usize, offsets: &[isize]) -> Result<Self> {
        if offsets.is_empty() || embed < offsets.len() {
            return Err(Error::invalid(format!("{} shift groups do not fit embedding width {embed}", offsets.len())));
        }
        let lin = |store: &mut ParamStore<T>, part: &str| Linear::new(store, b, &format!("{name}.{part}"), embed, embed);
        Ok(TokMlpBlock {
            proj_w_in: lin(store, "proj_w_in")?,
            proj_w_out: lin(store, "proj_w_out")?,
            mlp_in: lin(store, "mlp_in")?,
            dwconv: Conv2d::new(
                store,
                b,
                &format!("{name}.dwconv"),
                embed,
                embed,
                3,
                ConvOpts { padding: 1, groups: embed, ..ConvOpts::default() },
                true,
            )?,
            proj_h_in: lin(store, "proj_h_in")?,
            proj_h_out: lin(store, "proj_h_out")?,
            mlp_out: lin(store, "mlp_out")?,
            norm: LayerNorm::new(store, b, &format!("{name}.norm"), embed)?,
            proj_out: lin(store, "proj_out")?,
            offsets: offsets.to_vec(),
        })
    }

    pub fn max_offset(&self) -> usize {
        self.offsets.iter().map(|o| o.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, f: Var) -> Result<Var> {
        let (_, _, h, w) = s.tape.value(f).dims4()?;
        let m = self.max_offset();
        if h <= m || w <= m {
            return Err(Error::shape(format!("tokenized MLP block needs extents > {m}, got {h}x{w}")));
        }
        let t = self.proj_w_in.forward(s, f)?;
        let t = s.tape.axial_shift(t, Axis::Width, &self.offsets)?;
        let t_w = self.proj_w_out.forward(s, t)?;

        let t = self.mlp_in.forward(s, t_w)?;
        let t = self.dwconv.forward(s, t)?;
        let t = s.tape.gelu(t);

        let u = self.proj_h_in.forward(s, t)?;
        let u = s.tape.axial_shift(u, Axis::Height, &self.offsets)?;
        let t_h = self.proj_h_out.forward(s, u)?;

        let m = self.mlp_out.forward(s, t_h)?;
        let r = s.tape.add(f, m)?;
        let n = self.norm.forward(s, r)?;
        self.proj_out.forward(s, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;
    use crate::blocks::test_util::zero_params;
    use crate::tensor::{Init, Tensor};

    #[test]
    fn zeroed_mlps_reduce_to_projected_norm() {
        let mut store = ParamStore::<f64>::new();
        let blk = TokMlpBlock::new(&mut store, &Builder::new(5), "tok", 10, &DEFAULT_SHIFTS).unwrap();
        zero_params(&mut store, &["tok.mlp_in.", "tok.mlp_out."]);
        let x = Tensor::create(&[2, 10, 6, 6], Init::Uniform { bound: 2.0, seed: 1 }).unwrap();
        let mut tape = Tape::new();
        let mut s = Session::new(&mut tape, &mut store, true);
        let xv = s.tape.constant(x);
        let y = blk.forward(&mut s, xv).unwrap();
        let n = blk.norm.forward(&mut s, xv).unwrap();
        let want = blk.proj_out.forward(&mut s, n).unwrap();
        assert_eq!(s.tape.value(y), s.tape.value(want));
    }

    #[test]
    fn shape_is_preserved() {
        let mut store = ParamStore::<f32>::new();
        let blk = TokMlpBlock::new(&mut store, &Builder::new(6), "tok", 64, &DEFAULT_SHIFTS).unwrap();
        let mut tape = Tape::new();
        let mut s = Session::new(&mut tape, &mut store, false);
        let x = Tensor::create(&[1, 64, 16, 16], Init::Uniform { bound: 1.0, seed: 2 }).unwrap();
        let xv = s.tape.constant(x);
        let y = blk.forward(&mut s, xv).unwrap();
        assert_eq!(s.tape.shape(y), &[1, 64, 16, 16]);
    }

    #[test]
    fn incompatible_offsets_rejected() {
        let mut store = ParamStore::<f32>::new();
        assert!(TokMlpBlock::new(&mut store, &Builder::new(6), "tok", 4, &DEFAULT_SHIFTS).is_err());
        let blk = TokMlpBlock::new(&mut store, &Builder::new(6), "tok2", 8, &DEFAULT_SHIFTS).unwrap();
        let mut tape = Tape::new();
        let mut s = Session::new(&mut tape, &mut store, false);
        let xv = s.tape.constant(Tensor::ones(&[1, 8, 2, 2]).unwrap());
        assert!(blk.forward(&mut s, xv).is_err());
    }
}
