use serde::{Deserialize, Serialize};

use crate::data::{add_gaussian_noise, add_poisson_noise, Dataset, Sample, DEFAULT_POISSON_SCALE};
use crate::error::{Error, Result};
use crate::metrics::{batch_evaluate, Aggregate};
use crate::network::Model;
use crate::rng::derive_seed;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Gaussian,
    Poisson,
}

/// Gaussian levels are variances, Poisson levels photon scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub level: f64,
}

impl std::str::FromStr for NoiseSpec {
    type Err = Error;

    /// `none`, `gaussian:<variance>` or `poisson[:<scale>]`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, level) = s.split_once(':').map_or((s, None), |(k, l)| (k, Some(l)));
        let level = level.map(|l| l.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad noise level in {s:?}")))).transpose()?;
        match (kind.trim().to_ascii_lowercase().as_str(), level) {
            ("none", None) => Ok(NoiseSpec { kind: NoiseKind::None, level: 0.0 }),
            ("gaussian", Some(v)) if v >= 0.0 => Ok(NoiseSpec { kind: NoiseKind::Gaussian, level: v }),
            ("poisson", None) => Ok(NoiseSpec { kind: NoiseKind::Poisson, level: DEFAULT_POISSON_SCALE }),
            ("poisson", Some(v)) if v > 0.0 => Ok(NoiseSpec { kind: NoiseKind::Poisson, level: v }),
            _ => Err(Error::invalid(format!("bad noise spec {s:?} (expected none, gaussian:<variance>, poisson[:<scale>])"))),
        }
    }
}

impl std::fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            NoiseKind::None => write!(f, "none"),
            NoiseKind::Gaussian => write!(f, "gaussian:{}", self.level),
            NoiseKind::Poisson => write!(f, "poisson:{}", self.level),
        }
    }
}

pub fn default_noise_specs() -> Vec<NoiseSpec> {
    let g = |level| NoiseSpec { kind: NoiseKind::Gaussian, level };
    vec![
        NoiseSpec { kind: NoiseKind::None, level: 0.0 },
        NoiseSpec { kind: NoiseKind::Poisson, level: DEFAULT_POISSON_SCALE },
        g(0.05),
        g(0.15),
        g(0.3),
        g(0.45),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub spec: NoiseSpec,
    pub metrics: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub rows: Vec<RobustnessRow>,
}

#[derive(Serialize)]
struct CsvRow {
    noise: String,
    level: f64,
    f1: f64,
    miou: f64,
    sensitivity: f64,
    precision: f64,
    asd: Option<f64>,
}

impl RobustnessReport {
    /// Columns `noise,level,f1,miou,sensitivity,precision,asd`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            let m = &r.metrics;
            w.serialize(CsvRow {
                noise: format!("{:?}", r.spec.kind).to_lowercase(),
                level: r.spec.level,
                f1: m.f1,
                miou: m.miou,
                sensitivity: m.sensitivity,
                precision: m.precision,
                asd: m.asd,
            })
            .map_err(|e| Error::invalid(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

fn noisy(s: &Sample, spec: NoiseSpec, seed: u64) -> Result<Sample> {
    let seed = derive_seed(seed, &s.id);
    let image = match spec.kind {
        NoiseKind::None => return Ok(s.clone()),
        NoiseKind::Gaussian => add_gaussian_noise(&s.image, spec.level, seed)?,
        NoiseKind::Poisson => add_poisson_noise(&s.image, spec.level, seed)?,
    };
    Ok(Sample { image, ..s.clone() })
}

/// Evaluates `model` on noisy copies of `ds` (masks untouched); noise for
/// each image is keyed by `(seed, sample id)`.
pub fn noise_robustness<T: Scalar>(
    model: &Model<T>,
    ds: &Dataset,
    specs: &[NoiseSpec],
    seed: u64,
    threshold: f64,
) -> Result<RobustnessReport> {
    let mut rows = Vec::with_capacity(specs.len());
    for &spec in specs {
        let data = ds.map(|s| noisy(s, spec, seed))?;
        let report = batch_evaluate(model, &data, threshold)?;
        rows.push(RobustnessRow { spec, metrics: report.aggregate });
    }
    Ok(RobustnessReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_specs() {
        assert_eq!("gaussian:0.45".parse::<NoiseSpec>().unwrap(), NoiseSpec { kind: NoiseKind::Gaussian, level: 0.45 });
        assert_eq!("poisson".parse::<NoiseSpec>().unwrap().level, DEFAULT_POISSON_SCALE);
        assert_eq!("none".parse::<NoiseSpec>().unwrap().kind, NoiseKind::None);
        for bad in ["gaussian", "gaussian:-1", "poisson:0", "salt:0.1", "none:2"] {
            assert!(bad.parse::<NoiseSpec>().is_err(), "{bad}");
        }
        assert!(default_noise_specs().iter().any(|s| s.kind == NoiseKind::Gaussian && s.level == 0.45));
        let s: NoiseSpec = "gaussian:0.3".parse().unwrap();
        assert_eq!(s.to_string().parse::<NoiseSpec>().unwrap(), s);
    }
}
