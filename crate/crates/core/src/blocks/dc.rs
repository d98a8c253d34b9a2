use crate::autograd::{ConvOpts, Var};
use crate::error::{Error, Result};
use crate::layers::{Builder, Conv2d, ConvBnRelu};
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;

/// Dual-channel block: two parallel branches of three 3x3 Conv -> BN -> ReLU
/// layers with widths `W/6, W/3, W/2` (floored), concatenated, plus an
/// optional 1x1 residual projection of the block input.
#[derive(Debug, Clone)]
pub struct DcBlock {
    pub branches: [Vec<ConvBnRelu>; 2],
    pub residual: Option<Conv2d>,
    pub width: usize,
}

impl DcBlock {
    pub fn branch_widths(width: usize) -> [usize; 3] {
        [width / 6, width / 3, width / 2]
    }

    pub fn new<T: Scalar>(store: &mut ParamStore<T>, b: &Builder, name: &str, cin: usize, width: usize, residual: bool) -> Result<Self> {
        if width < 6 || width % 2 != 0 {
            return Err(Error::invalid(format!("DC-block width must be even and >= 6, got {width}")));
        }
        let widths = Self::branch_widths(width);
        let mut make_branch = |tag: &str| -> Result<Vec<ConvBnRelu>> {
            let mut layers = Vec::with_capacity(3);
            let mut c = cin;
            for (i, &w) in widths.iter().enumerate() {
                layers.push(ConvBnRelu::new(store, b, &format!("{name}.{tag}.{i}"), c, w, 3, ConvOpts::padded(1))?);
                c = w;
            }
            Ok(layers)
        };
        let branches = [make_branch("a")?, make_branch("b")?];
        let residual = if residual {
            Some(Conv2d::new(store, b, &format!("{name}.residual"), cin, 2 * (width / 2), 1, ConvOpts::default(), true)?)
        } else {
            None
        };
        Ok(DcBlock { branches, residual, width })
    }

    pub fn out_channels(&self) -> usize {
        2 * (self.width / 2)
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let (_, _, h, w) = s.tape.value(x).dims4()?;
        if h < 3 || w < 3 {
            return Err(Error::shape(format!("DC-block needs spatial extents >= 3, got {h}x{w}")));
        }
        let mut outs = Vec::with_capacity(2);
        for branch in &self.branches {
            let mut y = x;
            for layer in branch {
                y = layer.forward(s, y)?;
            }
            outs.push(y);
        }
        let cat = s.tape.concat(&outs)?;
        match &self.residual {
            Some(r) => {
                let res = r.forward(s, x)?;
                s.tape.add(cat, res)
            }
            None => Ok(cat),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;
    use crate::blocks::test_util::zero_params;
    use crate::tensor::{Init, Tensor};

    #[test]
    fn width_sixteen_branch_widths() {
        assert_eq!(DcBlock::branch_widths(16), [2, 5, 8]);
        let mut store = ParamStore::<f32>::new();
        let blk = DcBlock::new(&mut store, &Builder::new(0), "dc", 3, 16, true).unwrap();
        assert_eq!(blk.out_channels(), 16);
    }

    #[test]
    fn narrow_or_odd_width_rejected() {
        let mut store = ParamStore::<f32>::new();
        assert!(DcBlock::new(&mut store, &Builder::new(0), "dc", 3, 4, true).is_err());
        assert!(DcBlock::new(&mut store, &Builder::new(0), "dc2", 3, 9, true).is_err());
    }

    #[test]
    fn zeroed_branches_leave_residual_path() {
        let mut store = ParamStore::<f64>::new();
        let blk = DcBlock::new(&mut store, &Builder::new(4), "dc", 3, 12, true).unwrap();
        zero_params(&mut store, &["dc.a.", "dc.b."]);
        let x = Tensor::<f64>::create(&[2, 3, 6, 6], Init::Uniform { bound: 1.0, seed: 8 }).unwrap();

        let mut tape = Tape::new();
        let mut s = Session::new(&mut tape, &mut store, true);
        let xv = s.tape.constant(x.clone());
        let y = blk.forward(&mut s, xv).unwrap();
        let got = s.tape.value(y).clone();
        let res = blk.residual.as_ref().unwrap().forward(&mut s, xv).unwrap();
        assert_eq!(&got, s.tape.value(res));
    }

    #[test]
    fn preserves_spatial_shape() {
        let mut store = ParamStore::<f32>::new();
        let blk = DcBlock::new(&mut store, &Builder::new(1), "dc", 2, 8, false).unwrap();
        let mut tape = Tape::new();
        let mut s = Session::new(&mut tape, &mut store, false);
        let xv = s.tape.constant(Tensor::ones(&[1, 2, 5, 7]).unwrap());
        let y = blk.forward(&mut s, xv).unwrap();
        assert_eq!(s.tape.shape(y), &[1, 8, 5, 7]);
    }
}
