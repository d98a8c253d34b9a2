use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::batch_evaluate;
use crate::network::{build_msdcanet, estimate_flops, gflops, BottleneckKind, ConvBlockKind, ModelConfig, Variant};
use crate::scalar::Scalar;
use crate::trainer::{train, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationAxis {
    Modules,
    Rates,
    Placement,
    Channels,
}

impl std::str::FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modules" => Ok(AblationAxis::Modules),
            "rates" => Ok(AblationAxis::Rates),
            "placement" => Ok(AblationAxis::Placement),
            "channels" => Ok(AblationAxis::Channels),
            other => Err(Error::invalid(format!("unknown ablation axis {other:?} (expected modules, rates, placement or channels)"))),
        }
    }
}

/// Labelled configurations along `axis`, each derived from `base`.
pub fn axis_rows(base: &ModelConfig, axis: AblationAxis) -> Vec<(String, ModelConfig)> {
    match axis {
        AblationAxis::Modules => {
            let row = |tok: bool, dc: bool, aspp: bool, ag: bool| ModelConfig {
                tok_mlp_stages: if tok { base.tok_mlp_stages.clone() } else { Vec::new() },
                conv_block: if dc { ConvBlockKind::DualChannel } else { ConvBlockKind::DoubleConv },
                bottleneck: if aspp { BottleneckKind::ResAspp } else { BottleneckKind::DoubleConv },
                attention_gate: ag,
                ..base.clone()
            };
            vec![
                ("Baseline (UNet)".into(), row(false, false, false, false)),
                ("Baseline+Tok-MLP".into(), row(true, false, false, false)),
                ("Baseline+Tok-MLP+Res-ASPP".into(), row(true, false, true, false)),
                ("Baseline+Tok-MLP+DC-Conv".into(), row(true, true, false, false)),
                ("Baseline+Tok-MLP+DC-Conv+Res-ASPP".into(), row(true, true, true, false)),
                ("Baseline+Tok-MLP+DC-Conv+Res-ASPP+AG".into(), row(true, true, true, true)),
            ]
        }
        AblationAxis::Rates => [[2, 4, 8, 12], [4, 8, 16, 24], [6, 12, 18, 24]]
            .iter()
            .map(|r| {
                let label = format!("({})", r.map(|v| v.to_string()).join(","));
                (label, ModelConfig { dilation_rates: r.to_vec(), ..base.clone() })
            })
            .collect(),
        AblationAxis::Placement => [vec![4], vec![3, 4], vec![2, 3, 4]]
            .into_iter()
            .map(|stages| {
                let label = stages.iter().rev().map(|s| format!("({s})")).collect::<String>();
                (label, ModelConfig { tok_mlp_stages: stages, ..base.clone() })
            })
            .collect(),
        AblationAxis::Channels => [Variant::S, Variant::M, Variant::L]
            .into_iter()
            .map(|v| {
                let channels = v.channels().expect("preset variant");
                (format!("MS-DCANet-{v:?}"), ModelConfig { variant: v, channels, ..base.clone() })
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub params: usize,
    pub params_mb: f64,
    pub gflops: f64,
    pub f1: f64,
    pub miou: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Columns `label,params,params_mb,gflops,f1,miou,best_epoch`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::invalid(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Builds, trains and scores one configuration. FLOPs are counted on a
/// single image of the validation shape.
pub fn run_variant<T: Scalar>(
    label: &str,
    cfg: &ModelConfig,
    model_seed: u64,
    train_ds: &Dataset,
    val_ds: &Dataset,
    train_cfg: &TrainConfig,
) -> Result<AblationRow> {
    let mut model = build_msdcanet::<T>(cfg.clone(), model_seed)?;
    let [c, h, w] = val_ds.uniform_shape(1)?;
    let flops = estimate_flops(&model, &[1, c, h, w])?;
    let pc = model.param_count();
    let out = train(&mut model, train_ds, val_ds, train_cfg)?;
    let report = batch_evaluate(&out.best_model, val_ds, train_cfg.threshold)?;
    Ok(AblationRow {
        label: label.to_string(),
        params: pc.count,
        params_mb: pc.megabytes,
        gflops: gflops(flops),
        f1: report.aggregate.f1,
        miou: report.aggregate.miou,
        best_epoch: out.best_epoch,
    })
}

/// Trains every row of `axis` with the same seeds and training settings.
pub fn ablation_sweep<T: Scalar>(
    base: &ModelConfig,
    axis: AblationAxis,
    model_seed: u64,
    train_ds: &Dataset,
    val_ds: &Dataset,
    train_cfg: &TrainConfig,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<AblationTable> {
    let mut rows = Vec::new();
    for (label, cfg) in axis_rows(base, axis) {
        let row = run_variant::<T>(&label, &cfg, model_seed, train_ds, val_ds, train_cfg)?;
        on_row(&row);
        rows.push(row);
    }
    Ok(AblationTable { axis, rows })
}
