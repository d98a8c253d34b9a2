//! The four architectural units: dual-channel convolution block, additive
//! attention gate, tokenized MLP block with axial shifts, and the residual
//! atrous spatial pyramid bottleneck.

mod aspp;
mod attention;
mod dc;
mod tok_mlp;

pub use aspp::ResAspp;
pub use attention::AttentionGate;
pub use dc::DcBlock;
pub use tok_mlp::{TokMlpBlock, DEFAULT_SHIFTS};

use crate::autograd::{ConvOpts, Var};
use crate::error::Result;
use crate::layers::{Builder, ConvBnRelu};
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;

/// Two stacked 3x3 Conv -> BN -> ReLU layers (the classic UNet stage).
#[derive(Debug, Clone)]
pub struct DoubleConv {
    pub first: ConvBnRelu,
    pub second: ConvBnRelu,
}

impl DoubleConv {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, b: &Builder, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Ok(DoubleConv {
            first: ConvBnRelu::new(store, b, &format!("{name}.0"), cin, cout, 3, ConvOpts::padded(1))?,
            second: ConvBnRelu::new(store, b, &format!("{name}.1"), cout, cout, 3, ConvOpts::padded(1))?,
        })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let y = self.first.forward(s, x)?;
        self.second.forward(s, y)
    }
}
