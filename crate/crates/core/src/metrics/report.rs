use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{asd, confusion, f1, infection_ratio, miou, precision, sensitivity, Mask};
use crate::data::{batch_samples, Dataset, Sample};
use crate::error::{Error, Result};
use crate::network::Model;
use crate::scalar::Scalar;

/// Samples per forward pass during evaluation.
pub const EVAL_BATCH: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    pub f1: f64,
    pub miou: f64,
    pub sensitivity: f64,
    pub precision: f64,
    /// `None` when either mask is empty.
    pub asd: Option<f64>,
    /// Predicted share of the region mask, when the sample has one.
    pub infection_ratio: Option<f64>,
    pub true_infection_ratio: Option<f64>,
    /// Set when this image could not be scored; its rates are then NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub images: usize,
    pub scored: usize,
    pub f1: f64,
    pub miou: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub asd: Option<f64>,
    pub asd_images: usize,
    pub infection_ratio: Option<f64>,
    pub true_infection_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub images: Vec<ImageMetrics>,
    pub aggregate: Aggregate,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    id: &'a str,
    f1: f64,
    miou: f64,
    sensitivity: f64,
    precision: f64,
    asd: Option<f64>,
    infection_ratio: Option<f64>,
}

pub fn evaluate_masks(id: &str, pred: &Mask, gt: &Mask, region: Option<&Mask>) -> Result<ImageMetrics> {
    let cm = confusion(pred, gt)?;
    let asd = match asd(pred, gt) {
        Ok(v) => Some(v),
        Err(Error::UndefinedAsd) => None,
        Err(e) => return Err(e),
    };
    let ratio = |m: &Mask| region.map(|r| infection_ratio(m, r)).transpose();
    Ok(ImageMetrics {
        id: id.to_string(),
        f1: f1(&cm),
        miou: miou(&cm),
        sensitivity: sensitivity(&cm),
        precision: precision(&cm),
        asd,
        infection_ratio: ratio(pred)?,
        true_infection_ratio: ratio(gt)?,
        error: None,
    })
}

fn failed(id: &str, e: &Error) -> ImageMetrics {
    ImageMetrics {
        id: id.to_string(),
        f1: f64::NAN,
        miou: f64::NAN,
        sensitivity: f64::NAN,
        precision: f64::NAN,
        asd: None,
        infection_ratio: None,
        true_infection_ratio: None,
        error: Some(e.to_string()),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl MetricsReport {
    /// Sorts by id and aggregates over images without an error flag.
    pub fn from_images(mut images: Vec<ImageMetrics>) -> Self {
        images.sort_by(|a, b| a.id.cmp(&b.id));
        let ok: Vec<&ImageMetrics> = images.iter().filter(|m| m.error.is_none()).collect();
        let avg = |f: fn(&ImageMetrics) -> f64| mean(ok.iter().map(|m| f(m))).unwrap_or(f64::NAN);
        let aggregate = Aggregate {
            images: images.len(),
            scored: ok.len(),
            f1: avg(|m| m.f1),
            miou: avg(|m| m.miou),
            sensitivity: avg(|m| m.sensitivity),
            precision: avg(|m| m.precision),
            asd: mean(ok.iter().filter_map(|m| m.asd)),
            asd_images: ok.iter().filter(|m| m.asd.is_some()).count(),
            infection_ratio: mean(ok.iter().filter_map(|m| m.infection_ratio)),
            true_infection_ratio: mean(ok.iter().filter_map(|m| m.true_infection_ratio)),
        };
        MetricsReport { images, aggregate }
    }

    pub fn scores(&self, f: impl Fn(&ImageMetrics) -> f64) -> Vec<f64> {
        self.images.iter().map(f).collect()
    }

    /// Columns `id,f1,miou,sensitivity,precision,asd,infection_ratio`;
    /// undefined values are empty cells.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for m in &self.images {
            w.serialize(CsvRow {
                id: &m.id,
                f1: m.f1,
                miou: m.miou,
                sensitivity: m.sensitivity,
                precision: m.precision,
                asd: m.asd,
                infection_ratio: m.infection_ratio,
            })
            .map_err(|e| Error::invalid(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn aggregate_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.aggregate)?)
    }

    pub fn write(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.to_csv()?)?;
        std::fs::write(json_path, self.aggregate_json()?)?;
        Ok(())
    }
}

/// Thresholded predictions, one per sample; a failed batch falls back to
/// per-sample passes so one bad image cannot sink the rest.
pub fn predict_masks<T: Scalar>(model: &Model<T>, samples: &[&Sample], threshold: f64) -> Vec<Result<Mask>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let run = |part: &[&Sample]| -> Result<Vec<Mask>> {
            let (x, _) = batch_samples::<T>(part)?;
            let logits = model.predict(&x)?;
            let (n, _, h, w) = logits.dims4()?;
            let plane = h * w;
            (0..n)
                .map(|i| {
                    let t = crate::tensor::Tensor::from_vec(&[h, w], logits.data()[i * plane..(i + 1) * plane].to_vec())?;
                    Mask::from_logits(&t, threshold)
                })
                .collect()
        };
        match run(chunk) {
            Ok(masks) => out.extend(masks.into_iter().map(Ok)),
            Err(_) => out.extend(chunk.iter().map(|s| run(std::slice::from_ref(s)).map(|mut v| v.remove(0)))),
        }
    }
    out
}

/// Scores `model` on every sample with masks `sigmoid(logits) >= threshold`.
pub fn batch_evaluate<T: Scalar>(model: &Model<T>, ds: &Dataset, threshold: f64) -> Result<MetricsReport> {
    if ds.is_empty() {
        return Err(Error::invalid(format!("dataset {} is empty", ds.source)));
    }
    let samples: Vec<&Sample> = ds.samples.iter().collect();
    let preds = predict_masks(model, &samples, threshold);
    let images = samples
        .iter()
        .zip(preds)
        .map(|(s, p)| p.and_then(|p| evaluate_masks(&s.id, &p, &s.mask, s.region.as_ref())).unwrap_or_else(|e| failed(&s.id, &e)))
        .collect();
    Ok(MetricsReport::from_images(images))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&str]) -> Mask {
        let h = rows.len();
        let w = rows[0].len();
        Mask::from_fn(h, w, |y, x| rows[y].as_bytes()[x] == b'#').unwrap()
    }

    #[test]
    fn aggregate_is_mean_of_scored() {
        let gt = m(&["##..", "##..", "....", "...."]);
        let a = evaluate_masks("b", &gt, &gt, None).unwrap();
        let b = evaluate_masks("a", &m(&["#...", "....", "....", "...."]), &gt, None).unwrap();
        let bad = failed("c", &Error::NonFinite("enc1".into()));
        let r = MetricsReport::from_images(vec![a.clone(), b.clone(), bad]);
        assert_eq!(r.images[0].id, "a");
        assert_eq!(r.aggregate.scored, 2);
        assert_eq!(r.aggregate.miou, (a.miou + b.miou) / 2.0);
        assert_eq!(r.aggregate.f1, (1.0 + b.f1) / 2.0);
    }

    #[test]
    fn csv_columns() {
        let gt = m(&["#.", ".."]);
        let r = MetricsReport::from_images(vec![evaluate_masks("x", &Mask::zeros(2, 2).unwrap(), &gt, Some(&gt)).unwrap()]);
        let csv = r.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "id,f1,miou,sensitivity,precision,asd,infection_ratio");
        assert_eq!(lines.next().unwrap(), "x,0.0,0.375,0.0,0.0,,0.0");
        let json: serde_json::Value = serde_json::from_str(&r.aggregate_json().unwrap()).unwrap();
        assert_eq!(json["true_infection_ratio"], 1.0);
    }
}
