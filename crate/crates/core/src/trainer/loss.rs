use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub bce: f64,
    pub dice: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { bce: 0.5, dice: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.bce) || !ok(self.dice) || self.bce + self.dice == 0.0 {
            return Err(Error::invalid(format!(
                "loss weights must be finite, >= 0 and not both zero (bce={}, dice={})",
                self.bce, self.dice
            )));
        }
        Ok(())
    }
}

/// `w_bce * BCE(sigmoid(logits), target) + w_dice * (1 - (2 Σpt + 1) / (Σp + Σt + 1))`
/// with `p = sigmoid(logits)`; both terms are taken over the whole batch.
pub fn bce_dice_loss<T: Scalar>(tape: &mut Tape<T>, logits: Var, target: Var, w: LossWeights) -> Result<Var> {
    w.validate()?;
    if let Some(v) = tape.value(target).data().iter().find(|&&v| v != T::zero() && v != T::one()) {
        return Err(Error::invalid(format!("target value {v} is not binary")));
    }
    let bce = tape.bce_with_logits(logits, target)?;
    let p = tape.sigmoid(logits);
    let pt = tape.mul(p, target)?;
    let spt = tape.sum(pt);
    let sp = tape.sum(p);
    let st = tape.sum(target);
    let num = tape.scale(spt, T::from_f64_lossy(2.0));
    let num = tape.add_scalar(num, T::one());
    let den = tape.add(sp, st)?;
    let den = tape.add_scalar(den, T::one());
    let ratio = tape.div(num, den)?;
    let dice = tape.scale(ratio, -T::one());
    let dice = tape.add_scalar(dice, T::one());
    let a = tape.scale(bce, T::from_f64_lossy(w.bce));
    let b = tape.scale(dice, T::from_f64_lossy(w.dice));
    tape.add(a, b)
}
