use crate::autograd::{ConvOpts, Var};
use crate::error::{Error, Result};
use crate::layers::{Builder, Conv2d};
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;

/// Additive attention gate on a skip connection:
/// `alpha = sigmoid(psi(relu(Wx * x + Wg * g)))`, `out = x * alpha`.
#[derive(Debug, Clone)]
pub struct AttentionGate {
    pub wx: Conv2d,
    pub wg: Conv2d,
    pub psi: Conv2d,
}

impl AttentionGate {
    pub fn intermediate_channels(skip_channels: usize) -> usize {
        (skip_channels / 2).max(1)
    }

    pub fn new<T: Scalar>(store: &mut ParamStore<T>, b: &Builder, name: &str, skip_channels: usize, gate_channels: usize) -> Result<Self> {
        let fint = Self::intermediate_channels(skip_channels);
        let one = ConvOpts::default();
        Ok(AttentionGate {
            wx: Conv2d::new(store, b, &format!("{name}.wx"), skip_channels, fint, 1, one, true)?,
            wg: Conv2d::new(store, b, &format!("{name}.wg"), gate_channels, fint, 1, one, true)?,
            psi: Conv2d::new(store, b, &format!("{name}.psi"), fint, 1, 1, one, true)?,
        })
    }

    /// Returns `(gated skip, alpha)`.
    pub fn forward_with_alpha<T: Scalar>(&self, s: &mut Session<'_, T>, x_skip: Var, g: Var) -> Result<(Var, Var)> {
        let (_, _, hx, wx) = s.tape.value(x_skip).dims4()?;
        let (_, _, hg, wg) = s.tape.value(g).dims4()?;
        if (hx, wx) != (hg, wg) {
            return Err(Error::shape(format!("attention gate spatial mismatch: skip {hx}x{wx}, gate {hg}x{wg}")));
        }
        let a = self.wx.forward(s, x_skip)?;
        let b = self.wg.forward(s, g)?;
        let sum = s.tape.add(a, b)?;
        let act = s.tape.relu(sum);
        let logit = self.psi.forward(s, act)?;
        let alpha = s.tape.sigmoid(logit);
        let out = s.tape.mul_channel(x_skip, alpha)?;
        Ok((out, alpha))
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x_skip: Var, g: Var) -> Result<Var> {
        Ok(self.forward_with_alpha(s, x_skip, g)?.0)
    }
}
