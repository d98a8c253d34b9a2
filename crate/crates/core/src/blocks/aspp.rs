use crate::autograd::{ConvOpts, Var};
use crate::error::{Error, Result};
use crate::layers::{Builder, Conv2d, ConvBnRelu};
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;

/// Residual atrous spatial pyramid: one dilated 3x3 Conv -> BN -> ReLU branch
/// per rate (padding = rate, so shape is preserved), branch outputs
/// concatenated and fused by a 1x1 conv, plus an identity skip.
///
/// Each branch is `C / rates` channels wide so the concatenation is `C` wide.
#[derive(Debug, Clone)]
pub struct ResAspp {
    pub branches: Vec<ConvBnRelu>,
    pub fusion: Conv2d,
    pub rates: Vec<usize>,
}

impl ResAspp {
    pub fn validate_rates(rates: &[usize]) -> Result<()> {
        if rates.is_empty() || rates[0] == 0 || rates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!("dilation rates must be strictly increasing positive integers, got {rates:?}")));
        }
        Ok(())
    }

    pub fn branch_width(channels: usize, n_rates: usize) -> usize {
        (channels / n_rates).max(1)
    }

    pub fn new<T: Scalar>(store: &mut ParamStore<T>, b: &Builder, name: &str, channels: usize, rates: &[usize]) -> Result<Self> {
        Self::validate_rates(rates)?;
        let bw = Self::branch_width(channels, rates.len());
        let branches = rates
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let opts = ConvOpts { padding: r, dilation: r, ..ConvOpts::default() };
                ConvBnRelu::new(store, b, &format!("{name}.branch{i}"), channels, bw, 3, opts)
            })
            .collect::<Result<Vec<_>>>()?;
        let fusion = Conv2d::new(store, b, &format!("{name}.fusion"), bw * rates.len(), channels, 1, ConvOpts::default(), true)?;
        Ok(ResAspp { branches, fusion, rates: rates.to_vec() })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let outs = self.branches.iter().map(|br| br.forward(s, x)).collect::<Result<Vec<_>>>()?;
        let cat = s.tape.concat(&outs)?;
        let fused = self.fusion.forward(s, cat)?;
        s.tape.add(x, fused)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;
    use crate::blocks::test_util::zero_params;
    use crate::tensor::{Init, Tensor};

    #[test]
    fn zeroed_fusion_is_identity() {
        let mut store = ParamStore::<f64>::new();
        let blk = ResAspp::new(&mut store, &Builder::new(1), "aspp", 8, &[4, 8, 16, 24]).unwrap();
        zero_params(&mut store, &["aspp.fusion."]);
        let x = Tensor::create(&[2, 8, 6, 6], Init::Uniform { bound: 2.0, seed: 3 }).unwrap();
        let mut tape = Tape::new();
        let mut s = Session::new(&mut tape, &mut store, true);
        let xv = s.tape.constant(x.clone());
        let y = blk.forward(&mut s, xv).unwrap();
        assert_eq!(s.tape.value(y), &x);
    }

    #[test]
    fn rate_validation() {
        assert!(ResAspp::validate_rates(&[4, 8, 16, 24]).is_ok());
        assert!(ResAspp::validate_rates(&[4, 4, 16, 24]).is_err());
        assert!(ResAspp::validate_rates(&[8, 4]).is_err());
        assert!(ResAspp::validate_rates(&[0, 4]).is_err());
    }

    #[test]
    fn matches_composition_of_primitives() {
        let mut store = ParamStore::<f64>::new();
        let blk = ResAspp::new(&mut store, &Builder::new(9), "aspp", 8, &[1, 2, 3, 4]).unwrap();
        let x = Tensor::create(&[1, 8, 16, 16], Init::Uniform { bound: 1.0, seed: 4 }).unwrap();
        let mut tape = Tape::new();
        let mut s = Session::new(&mut tape, &mut store, true);
        let xv = s.tape.constant(x.clone());
        let y = blk.forward(&mut s, xv).unwrap();
        let got = s.tape.value(y).clone();
        drop(s);

        // rebuild from raw tape primitives with the stored tensors
        let mut rm = vec![0.0; 2];
        let mut rv = vec![1.0; 2];
        let mut t2 = Tape::new();
        let xv = t2.constant(x);
        let p = |name: &str| store.param(store.find_param(name).unwrap()).clone();
        let mut outs = Vec::new();
        for (i, r) in [1usize, 2, 3, 4].into_iter().enumerate() {
            let w = t2.constant(p(&format!("aspp.branch{i}.conv.weight")));
            let b = t2.constant(p(&format!("aspp.branch{i}.conv.bias")));
            let c = t2.conv2d(xv, w, Some(b), ConvOpts { padding: r, dilation: r, ..ConvOpts::default() }).unwrap();
            let g = t2.constant(p(&format!("aspp.branch{i}.bn.gamma")));
            let be = t2.constant(p(&format!("aspp.branch{i}.bn.beta")));
            let n = t2.batch_norm(c, g, be, &mut rm, &mut rv, true, Default::default()).unwrap();
            outs.push(t2.relu(n));
        }
        let cat = t2.concat(&outs).unwrap();
        let fw = t2.constant(p("aspp.fusion.weight"));
        let fb = t2.constant(p("aspp.fusion.bias"));
        let fused = t2.conv2d(cat, fw, Some(fb), ConvOpts::default()).unwrap();
        let want = t2.add(xv, fused).unwrap();
        assert_eq!(&got, t2.value(want));
    }
}
