use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Significance grade: `*` p < 0.05, `**` p < 0.01, `***` p < 0.001.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stars {
    Ns,
    One,
    Two,
    Three,
}

impl Stars {
    pub fn from_p(p: f64) -> Self {
        if p < 0.001 {
            Stars::Three
        } else if p < 0.01 {
            Stars::Two
        } else if p < 0.05 {
            Stars::One
        } else {
            Stars::Ns
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stars::Ns => "ns",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
        }
    }
}

impl std::fmt::Display for Stars {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    pub n: usize,
    pub grade: Stars,
    pub mean_difference: f64,
    /// Differences had zero variance but a nonzero mean.
    pub degenerate_variance: bool,
}

/// Paired two-sided t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("unpaired samples: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let result = |t: f64, p: f64, degenerate| TTestResult {
        t,
        p,
        n,
        grade: Stars::from_p(p),
        mean_difference: mean,
        degenerate_variance: degenerate,
    };
    // Spread below rounding noise of the mean counts as zero variance.
    if var.sqrt() <= 1e-12 * mean.abs().max(f64::MIN_POSITIVE) || var == 0.0 {
        return Ok(if mean == 0.0 { result(0.0, 1.0, false) } else { result(mean.signum() * f64::INFINITY, 0.0, true) });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::invalid(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(result(t, p, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_inputs() {
        let a = [0.7, 0.8, 0.9];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!((r.t, r.p, r.grade), (0.0, 1.0, Stars::Ns));
    }

    #[test]
    fn degenerate_variance() {
        let r = paired_t_test(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(r.degenerate_variance);
        assert_eq!(r.p, 0.0);
        assert_eq!(r.grade, Stars::Three);
    }

    #[test]
    fn errors() {
        assert!(paired_t_test(&[1.0], &[2.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn thresholds() {
        assert_eq!(Stars::from_p(0.05), Stars::Ns);
        assert_eq!(Stars::from_p(0.0499), Stars::One);
        assert_eq!(Stars::from_p(0.005), Stars::Two);
        assert_eq!(Stars::from_p(0.0009), Stars::Three);
    }
}
