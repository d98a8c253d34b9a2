use serde::{Deserialize, Serialize};

use super::distance::squared_edt;
use super::Mask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Both masks have no foreground.
    fn both_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }
}

pub fn confusion(pred: &Mask, gt: &Mask) -> Result<ConfusionMatrix> {
    if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
        return Err(Error::shape(format!("prediction {}x{} vs ground truth {}x{}", pred.height(), pred.width(), gt.height(), gt.width())));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// `num / den`, or 1.0 / 0.0 by the empty-mask convention when `den == 0`.
fn ratio(num: u64, den: u64, both_empty: bool) -> f64 {
    if den == 0 {
        if both_empty {
            1.0
        } else {
            0.0
        }
    } else {
        num as f64 / den as f64
    }
}

pub fn precision(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.tp, cm.tp + cm.fp, cm.both_empty())
}

pub fn sensitivity(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.tp, cm.tp + cm.fn_, cm.both_empty())
}

pub fn f1(cm: &ConfusionMatrix) -> f64 {
    let (p, r) = (precision(cm), sensitivity(cm));
    if p + r == 0.0 {
        return if cm.both_empty() { 1.0 } else { 0.0 };
    }
    2.0 * p * r / (p + r)
}

pub fn foreground_iou(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.tp, cm.tp + cm.fp + cm.fn_, cm.both_empty())
}

pub fn background_iou(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.tn, cm.tn + cm.fp + cm.fn_, cm.tn + cm.fp + cm.fn_ == 0)
}

/// Mean of foreground and background IoU.
pub fn miou(cm: &ConfusionMatrix) -> f64 {
    (foreground_iou(cm) + background_iou(cm)) / 2.0
}

/// Average surface distance: the mean of the two directed mean
/// nearest-boundary Euclidean distances.
pub fn asd(pred: &Mask, gt: &Mask) -> Result<f64> {
    confusion(pred, gt)?;
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::UndefinedAsd);
    }
    let (bp, bg) = (pred.boundary(), gt.boundary());
    Ok((directed(&bp, &bg) + directed(&bg, &bp)) / 2.0)
}

fn directed(from: &Mask, to: &Mask) -> f64 {
    let d2 = squared_edt(to);
    let (sum, n) = from.data().iter().zip(&d2).filter(|(b, _)| **b).fold((0.0, 0usize), |(s, n), (_, &d)| (s + (d as f64).sqrt(), n + 1));
    sum / n as f64
}

/// `|infection ∩ region| / |region|`.
pub fn infection_ratio(infection: &Mask, region: &Mask) -> Result<f64> {
    let cm = confusion(infection, region)?;
    if cm.tp + cm.fn_ == 0 {
        return Err(Error::invalid("region mask is empty"));
    }
    Ok(cm.tp as f64 / (cm.tp + cm.fn_) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[u8]) -> Mask {
        Mask::new(1, v.len(), v.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn hand_counts() {
        let cm = confusion(&row(&[1, 1, 0, 0]), &row(&[1, 0, 1, 0])).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, fp: 1, fn_: 1, tn: 1 });
        assert_eq!(precision(&cm), 0.5);
        assert_eq!(sensitivity(&cm), 0.5);
        assert_eq!(f1(&cm), 0.5);
        assert!((miou(&cm) - 1.0 / 3.0).abs() < 1e-15);
        let ones = row(&[1, 1, 1, 1]);
        assert_eq!(confusion(&ones, &ones).unwrap(), ConfusionMatrix { tp: 4, ..Default::default() });
        let g = row(&[1, 0, 0, 1]);
        let cm = confusion(&g.not(), &g).unwrap();
        assert_eq!((cm.tp, cm.tn), (0, 0));
    }

    #[test]
    fn conventions() {
        let z = row(&[0, 0, 0]);
        let cm = confusion(&z, &z).unwrap();
        assert_eq!((f1(&cm), miou(&cm), precision(&cm), sensitivity(&cm)), (1.0, 1.0, 1.0, 1.0));
        let g = row(&[0, 1, 0]);
        let cm = confusion(&z, &g).unwrap();
        assert_eq!((f1(&cm), sensitivity(&cm), precision(&cm)), (0.0, 0.0, 0.0));
        let perfect = confusion(&g, &g).unwrap();
        assert_eq!((f1(&perfect), miou(&perfect), precision(&perfect), sensitivity(&perfect)), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn shape_mismatch() {
        assert!(confusion(&row(&[1, 0]), &row(&[1, 0, 0])).is_err());
        assert!(Mask::from_values(1, 2, &[0.0f32, 0.5]).is_err());
    }

    #[test]
    fn asd_cases() {
        let a = Mask::from_fn(5, 7, |y, x| (y, x) == (2, 1)).unwrap();
        let b = Mask::from_fn(5, 7, |y, x| (y, x) == (2, 4)).unwrap();
        assert_eq!(asd(&a, &b).unwrap(), 3.0);
        assert_eq!(asd(&a, &a).unwrap(), 0.0);
        assert!(matches!(asd(&a, &Mask::zeros(5, 7).unwrap()), Err(Error::UndefinedAsd)));
    }

    #[test]
    fn infection_cases() {
        let region = Mask::from_fn(4, 4, |y, _| y < 3).unwrap();
        let inf = Mask::from_fn(4, 4, |y, x| y == 0 && x < 3).unwrap();
        assert_eq!(infection_ratio(&inf, &region).unwrap(), 0.25);
        assert_eq!(infection_ratio(&region, &region).unwrap(), 1.0);
        assert_eq!(infection_ratio(&Mask::zeros(4, 4).unwrap(), &region).unwrap(), 0.0);
        assert!(infection_ratio(&inf, &Mask::zeros(4, 4).unwrap()).is_err());
    }
}
