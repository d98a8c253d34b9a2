//! Run configuration: a TOML file with `[model]` and `[train]` sections,
//! overridden by command-line flags.
//!
//! ```toml
//! seed = 7
//!
//! [model]
//! variant = "S"
//! dilation_rates = [4, 8, 16, 24]
//! tok_mlp_stages = [3, 4]
//!
//! [train]
//! epochs = 40
//! lr = 0.0005
//! rotation = 25.0
//! ```
//!
//! Every command writes the fully resolved file (all defaults filled in,
//! plus a `[run]` table of paths and command flags) as `config.toml` in its
//! output directory, or to stderr when it has none. That file can be passed
//! back through `--config` to repeat the run.

use std::path::{Path, PathBuf};

use clap::Args;
use msdcanet::network::{BottleneckKind, ConvBlockKind};
use msdcanet::trainer::{AdamConfig, LossWeights, TrainConfig};
use msdcanet::{ModelConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const ECHO_FILE: &str = "config.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channels: Option<[usize; 5]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dilation_rates: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tok_mlp_stages: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift_offsets: Option<Vec<isize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub in_channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conv_block: Option<ConvBlockKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bottleneck: Option<BottleneckKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention_gate: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dc_residual: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adam_eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bce_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dice_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_every: Option<usize>,
    /// Degrees; 0 disables augmentation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "is_default")]
    pub train: TrainSection,
    /// Paths and command flags of the run that wrote the file; ignored on load.
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub run: toml::Table,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(crate::error::io_err(format!("reading {}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn load_opt(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(FileConfig::default()), FileConfig::load)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Channel preset: S, M or L.
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub lr: Option<f64>,
    /// Random rotation range in degrees (0 disables).
    #[arg(long, allow_hyphen_values = true)]
    pub rotation: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub threshold: Option<f64>,
}

/// Model and training settings after file and flag resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

fn model_config(sec: &ModelSection, flag: Option<Variant>) -> CliResult<ModelConfig> {
    let variant = match (flag, &sec.variant) {
        (Some(v), _) => v,
        (None, Some(s)) => s.parse().map_err(|e: msdcanet::Error| field("model", &e))?,
        // an explicit channel list without a preset name is a custom model
        (None, None) if sec.channels.is_some() => Variant::Custom,
        (None, None) => Variant::M,
    };
    let mut m = ModelConfig::msdcanet(variant);
    if let Some(c) = sec.channels {
        m.channels = c;
    }
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = &sec.$f { m.$f = v.clone(); } )* };
    }
    take!(dilation_rates, tok_mlp_stages, shift_offsets, in_channels, out_classes, conv_block, bottleneck, attention_gate, dc_residual);
    m.validate().map_err(|e| field("model", &e))?;
    Ok(m)
}

fn train_config(sec: &TrainSection, args: &TrainArgs, seed: u64) -> CliResult<TrainConfig> {
    let d = TrainConfig::default();
    let (da, dl) = (AdamConfig::default(), LossWeights::default());
    let rotation = args.rotation.or(sec.rotation).filter(|&r| r != 0.0);
    let t = TrainConfig {
        epochs: args.epochs.or(sec.epochs).unwrap_or(d.epochs),
        batch_size: args.batch_size.or(sec.batch_size).unwrap_or(d.batch_size),
        seed,
        adam: AdamConfig {
            lr: args.lr.or(sec.lr).unwrap_or(da.lr),
            beta1: sec.beta1.unwrap_or(da.beta1),
            beta2: sec.beta2.unwrap_or(da.beta2),
            eps: sec.adam_eps.unwrap_or(da.eps),
        },
        loss: LossWeights { bce: sec.bce_weight.unwrap_or(dl.bce), dice: sec.dice_weight.unwrap_or(dl.dice) },
        val_every: sec.val_every.unwrap_or(d.val_every),
        rotation,
        checkpoint_dir: None,
        threshold: args.threshold.or(sec.threshold).unwrap_or(d.threshold),
    };
    t.validate().map_err(|e| field("train", &e))?;
    Ok(t)
}

fn field(section: &str, e: &msdcanet::Error) -> CliError {
    CliError::Usage(format!("invalid [{section}] setting: {e}"))
}

impl RunConfig {
    pub fn resolve(file: &FileConfig, model: &ModelArgs, train: &TrainArgs) -> CliResult<Self> {
        let seed = model.seed.or(file.seed).unwrap_or(0);
        Ok(RunConfig { seed, model: model_config(&file.model, model.variant)?, train: train_config(&file.train, train, seed)? })
    }

    /// The echo form; loading it back resolves to the same configuration.
    pub fn to_file(&self, run: toml::Table) -> FileConfig {
        FileConfig { seed: Some(self.seed), model: model_section(&self.model), train: train_section(&self.train), run }
    }
}

pub fn model_section(m: &ModelConfig) -> ModelSection {
    ModelSection {
        variant: Some(format!("{:?}", m.variant)),
        channels: Some(m.channels),
        dilation_rates: Some(m.dilation_rates.clone()),
        tok_mlp_stages: Some(m.tok_mlp_stages.clone()),
        shift_offsets: Some(m.shift_offsets.clone()),
        in_channels: Some(m.in_channels),
        out_classes: Some(m.out_classes),
        conv_block: Some(m.conv_block),
        bottleneck: Some(m.bottleneck),
        attention_gate: Some(m.attention_gate),
        dc_residual: Some(m.dc_residual),
    }
}

pub fn train_section(t: &TrainConfig) -> TrainSection {
    TrainSection {
        epochs: Some(t.epochs),
        batch_size: Some(t.batch_size),
        lr: Some(t.adam.lr),
        beta1: Some(t.adam.beta1),
        beta2: Some(t.adam.beta2),
        adam_eps: Some(t.adam.eps),
        bce_weight: Some(t.loss.bce),
        dice_weight: Some(t.loss.dice),
        val_every: Some(t.val_every),
        rotation: Some(t.rotation.unwrap_or(0.0)),
        threshold: Some(t.threshold),
    }
}

/// Builds the `[run]` table from `(key, value)` pairs, skipping `None`s.
#[macro_export]
macro_rules! run_table {
    ($($k:literal => $v:expr),* $(,)?) => {{
        let mut t = toml::Table::new();
        $( $crate::config::put(&mut t, $k, $v); )*
        t
    }};
}

pub trait RunValue {
    fn to_value(&self) -> Option<toml::Value>;
}

impl RunValue for str {
    fn to_value(&self) -> Option<toml::Value> {
        Some(toml::Value::String(self.to_string()))
    }
}

impl RunValue for String {
    fn to_value(&self) -> Option<toml::Value> {
        self.as_str().to_value()
    }
}

impl RunValue for Path {
    fn to_value(&self) -> Option<toml::Value> {
        Some(toml::Value::String(self.display().to_string()))
    }
}

impl RunValue for PathBuf {
    fn to_value(&self) -> Option<toml::Value> {
        self.as_path().to_value()
    }
}

impl RunValue for u64 {
    fn to_value(&self) -> Option<toml::Value> {
        i64::try_from(*self).ok().map(toml::Value::Integer)
    }
}

impl RunValue for usize {
    fn to_value(&self) -> Option<toml::Value> {
        (*self as u64).to_value()
    }
}

impl RunValue for f64 {
    fn to_value(&self) -> Option<toml::Value> {
        Some(toml::Value::Float(*self))
    }
}

impl RunValue for bool {
    fn to_value(&self) -> Option<toml::Value> {
        Some(toml::Value::Boolean(*self))
    }
}

impl<T: RunValue> RunValue for Option<T> {
    fn to_value(&self) -> Option<toml::Value> {
        self.as_ref().and_then(T::to_value)
    }
}

impl<T: RunValue> RunValue for [T] {
    fn to_value(&self) -> Option<toml::Value> {
        Some(toml::Value::Array(self.iter().filter_map(T::to_value).collect()))
    }
}

impl<T: RunValue> RunValue for Vec<T> {
    fn to_value(&self) -> Option<toml::Value> {
        self.as_slice().to_value()
    }
}

pub fn put<V: RunValue + ?Sized>(t: &mut toml::Table, key: &str, v: &V) {
    if let Some(v) = v.to_value() {
        t.insert(key.to_string(), v);
    }
}

pub fn render(file: &FileConfig) -> CliResult<String> {
    toml::to_string(file).map_err(|e| CliError::Usage(format!("cannot serialise config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> FileConfig {
        toml::from_str(s).unwrap()
    }

    #[test]
    fn defaults() {
        let r = RunConfig::resolve(&FileConfig::default(), &ModelArgs::default(), &TrainArgs::default()).unwrap();
        assert_eq!(r.model, ModelConfig::msdcanet(Variant::M));
        assert_eq!(r.train.adam.lr, 0.0005);
        assert_eq!(r.train.epochs, 40);
        assert_eq!(r.seed, 0);
    }

    #[test]
    fn flags_override_file() {
        let f = parse("seed = 3\n[model]\nvariant = \"L\"\n[train]\nlr = 0.01\nepochs = 5\n");
        let m = ModelArgs { variant: Some(Variant::S), ..Default::default() };
        let t = TrainArgs { epochs: Some(2), ..Default::default() };
        let r = RunConfig::resolve(&f, &m, &t).unwrap();
        assert_eq!(r.model.channels, [8, 16, 32, 64, 128]);
        assert_eq!((r.train.epochs, r.train.adam.lr, r.seed, r.train.seed), (2, 0.01, 3, 3));
    }

    #[test]
    fn echo_round_trips() {
        let f = parse("[model]\nchannels = [8, 8, 16, 16, 32]\ntok_mlp_stages = [4]\n[train]\nrotation = 10.0\n");
        let r = RunConfig::resolve(&f, &ModelArgs::default(), &TrainArgs::default()).unwrap();
        assert_eq!(r.model.variant, Variant::Custom);
        let text = render(&r.to_file(run_table!("data" => "d", "n" => &5usize))).unwrap();
        let back = RunConfig::resolve(&toml::from_str(&text).unwrap(), &ModelArgs::default(), &TrainArgs::default()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn field_level_errors() {
        for (src, needle) in [
            ("[train]\nlr = -1.0\n", "lr"),
            ("[train]\nepochs = 0\n", "epochs"),
            ("[model]\ntok_mlp_stages = [1]\n", "tok_mlp_stages"),
            ("[model]\nvariant = \"XL\"\n", "variant"),
        ] {
            let e = RunConfig::resolve(&parse(src), &ModelArgs::default(), &TrainArgs::default()).unwrap_err();
            assert!(e.to_string().contains(needle), "{src}: {e}");
            assert_eq!(e.exit_code(), 1);
        }
        assert!(toml::from_str::<FileConfig>("[train]\nlearning_rate = 1.0\n").is_err());
    }
}
