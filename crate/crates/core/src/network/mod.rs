//! MS-DCANet and UNet assembly, parameter/FLOP accounting and checkpoints.

mod checkpoint;
mod config;

pub use checkpoint::{load, load_checkpoint, save, save_checkpoint, Checkpoint, OptimizerSnapshot, FORMAT_VERSION, MAGIC};
pub use config::{BottleneckKind, ConvBlockKind, ModelConfig, Variant, DEFAULT_RATES, DEFAULT_TOK_STAGES};

use crate::autograd::{ConvOpts, Tape, Var};
use crate::blocks::{AttentionGate, DcBlock, DoubleConv, ResAspp, TokMlpBlock};
use crate::error::{Error, Result};
use crate::layers::{Builder, Conv2d, ConvBnRelu};
use crate::params::{ParamStore, Session};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Total down-sampling factor between input and bottleneck.
pub const SPATIAL_DIVISOR: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Conv,
    TokMlp,
}

#[derive(Debug, Clone)]
pub enum ConvBlock {
    Dc(DcBlock),
    Double(DoubleConv),
}

impl ConvBlock {
    fn new<T: Scalar>(store: &mut ParamStore<T>, b: &Builder, name: &str, cin: usize, cout: usize, cfg: &ModelConfig) -> Result<Self> {
        Ok(match cfg.conv_block {
            ConvBlockKind::DualChannel => ConvBlock::Dc(DcBlock::new(store, b, name, cin, cout, cfg.dc_residual)?),
            ConvBlockKind::DoubleConv => ConvBlock::Double(DoubleConv::new(store, b, name, cin, cout)?),
        })
    }

    fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        match self {
            ConvBlock::Dc(b) => b.forward(s, x),
            ConvBlock::Double(b) => b.forward(s, x),
        }
    }
}

#[derive(Debug, Clone)]
pub enum EncoderStage {
    /// Max-pool (except at stage 1) followed by a convolutional block.
    Conv(ConvBlock),
    /// Stride-2 3x3 patch embedding followed by a tokenized MLP block.
    TokMlp { embed: Conv2d, block: TokMlpBlock },
}

#[derive(Debug, Clone)]
pub enum Bottleneck {
    ResAspp { entry: ConvBnRelu, aspp: ResAspp },
    Double(DoubleConv),
}

#[derive(Debug, Clone)]
pub enum DecoderStage {
    /// Skip (optionally attention-gated) concatenated with the up path.
    Conv { up: ConvBnRelu, gate: Option<AttentionGate>, block: ConvBlock },
    /// Skip added to the up path.
    TokMlp { up: ConvBnRelu, block: TokMlpBlock },
}

impl DecoderStage {
    fn up(&self) -> &ConvBnRelu {
        match self {
            DecoderStage::Conv { up, .. } | DecoderStage::TokMlp { up, .. } => up,
        }
    }
}

/// Stage layout of a built network. `decoder[0]` mirrors encoder stage 4.
#[derive(Debug, Clone)]
pub struct Network {
    pub encoder: Vec<EncoderStage>,
    pub bottleneck: Bottleneck,
    pub decoder: Vec<DecoderStage>,
    pub head: Conv2d,
}

/// A configured network together with its parameters.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub net: Network,
    pub store: ParamStore<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamCount {
    pub count: usize,
    pub megabytes: f64,
}

/// Output of a probed forward pass: the tape plus labelled intermediates.
pub struct Trace<T: Scalar> {
    pub tape: Tape<T>,
    pub input: Var,
    pub logits: Var,
    pub probes: std::collections::BTreeMap<String, Var>,
}

pub fn build_msdcanet<T: Scalar>(cfg: ModelConfig, seed: u64) -> Result<Model<T>> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let b = Builder::new(seed);
    let c = cfg.channels;
    let s = &mut store;

    let mut encoder = Vec::with_capacity(4);
    for stage in 1..=4 {
        let cin = if stage == 1 { cfg.in_channels } else { c[stage - 2] };
        let cout = c[stage - 1];
        let name = format!("enc{stage}");
        encoder.push(if cfg.is_tok_stage(stage) {
            let opts = ConvOpts { stride: 2, padding: 1, ..ConvOpts::default() };
            EncoderStage::TokMlp {
                embed: Conv2d::new(s, &b, &format!("{name}.embed"), cin, cout, 3, opts, true)?,
                block: TokMlpBlock::new(s, &b, &format!("{name}.tok"), cout, &cfg.shift_offsets)?,
            }
        } else {
            EncoderStage::Conv(ConvBlock::new(s, &b, &format!("{name}.block"), cin, cout, &cfg)?)
        });
    }

    let bottleneck = match cfg.bottleneck {
        BottleneckKind::ResAspp => Bottleneck::ResAspp {
            entry: ConvBnRelu::new(s, &b, "bottleneck.entry", c[3], c[4], 3, ConvOpts::padded(1))?,
            aspp: ResAspp::new(s, &b, "bottleneck.aspp", c[4], &cfg.dilation_rates)?,
        },
        BottleneckKind::DoubleConv => Bottleneck::Double(DoubleConv::new(s, &b, "bottleneck.double", c[3], c[4])?),
    };

    let mut decoder = Vec::with_capacity(4);
    for stage in (1..=4).rev() {
        let cj = c[stage - 1];
        let name = format!("dec{stage}");
        let up = ConvBnRelu::new(s, &b, &format!("{name}.up"), c[stage], cj, 3, ConvOpts::padded(1))?;
        decoder.push(if cfg.is_tok_stage(stage) {
            DecoderStage::TokMlp { up, block: TokMlpBlock::new(s, &b, &format!("{name}.tok"), cj, &cfg.shift_offsets)? }
        } else {
            let gate = if cfg.attention_gate { Some(AttentionGate::new(s, &b, &format!("{name}.gate"), cj, cj)?) } else { None };
            DecoderStage::Conv { up, gate, block: ConvBlock::new(s, &b, &format!("{name}.block"), 2 * cj, cj, &cfg)? }
        });
    }

    let head = Conv2d::new(s, &b, "head", c[0], cfg.out_classes, 1, ConvOpts::default(), true)?;
    Ok(Model { config: cfg, net: Network { encoder, bottleneck, decoder, head }, store })
}

pub fn build_unet_baseline<T: Scalar>(channels: [usize; 5], seed: u64) -> Result<Model<T>> {
    build_msdcanet(ModelConfig::unet(channels), seed)
}

/// Trainable parameter count; megabytes assume 32-bit weights.
pub fn count_params<T: Scalar>(store: &ParamStore<T>) -> ParamCount {
    let count = store.count();
    ParamCount { count, megabytes: count as f64 * 4.0 / (1u64 << 20) as f64 }
}

/// FLOPs recorded by the tape while `f` runs in evaluation mode on a zero
/// input of `input_shape`.
///
/// Per output element: conv / projection `2*Cin/groups*k*k` plus one bias
/// add; batch and layer norm 4; activations and elementwise arithmetic 1;
/// 2x2 max-pool 3; bilinear up-sampling 7. Shifts and concatenation are free.
pub fn measure_flops<T, F>(store: &ParamStore<T>, input_shape: &[usize], f: F) -> Result<u64>
where
    T: Scalar,
    F: FnOnce(&mut Session<'_, T>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(input_shape)?);
    let mut s = Session::inference(&mut tape, store);
    f(&mut s, x)?;
    Ok(tape.flops())
}

pub fn estimate_flops<T: Scalar>(m: &Model<T>, input_shape: &[usize]) -> Result<u64> {
    measure_flops(&m.store, input_shape, |s, x| m.net.forward(s, x))
}

pub fn gflops(flops: u64) -> f64 {
    flops as f64 / 1e9
}

impl Network {
    pub fn encoder_kinds(&self) -> Vec<StageKind> {
        self.encoder
            .iter()
            .map(|e| match e {
                EncoderStage::Conv(_) => StageKind::Conv,
                EncoderStage::TokMlp { .. } => StageKind::TokMlp,
            })
            .collect()
    }

    /// Decoder stage kinds in encoder order (stage 1 first).
    pub fn decoder_kinds(&self) -> Vec<StageKind> {
        self.decoder
            .iter()
            .rev()
            .map(|d| match d {
                DecoderStage::Conv { .. } => StageKind::Conv,
                DecoderStage::TokMlp { .. } => StageKind::TokMlp,
            })
            .collect()
    }

    /// Logits `[N, classes, H, W]`. Intermediates are probed as `enc1..enc4`,
    /// `bottleneck`, `dec4..dec1`; a non-finite value fails naming its stage.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let shape = s.tape.shape(x).to_vec();
        if shape.len() != 4 {
            return Err(Error::shape(format!("expected [N, C, H, W] input, got {shape:?}")));
        }
        let (h, w) = (shape[2], shape[3]);
        if h % SPATIAL_DIVISOR != 0 || w % SPATIAL_DIVISOR != 0 {
            return Err(Error::shape(format!("input {h}x{w} is not divisible by {SPATIAL_DIVISOR}")));
        }
        s.check_finite("input", x)?;

        let mut skips = Vec::with_capacity(4);
        let mut cur = x;
        for (i, stage) in self.encoder.iter().enumerate() {
            cur = match stage {
                EncoderStage::Conv(block) => {
                    let inp = if i == 0 { cur } else { s.tape.maxpool2(cur)? };
                    block.forward(s, inp)?
                }
                EncoderStage::TokMlp { embed, block } => {
                    let e = embed.forward(s, cur)?;
                    block.forward(s, e)?
                }
            };
            let label = format!("enc{}", i + 1);
            s.check_finite(&label, cur)?;
            s.probe(&label, cur);
            skips.push(cur);
        }

        let pooled = s.tape.maxpool2(cur)?;
        cur = match &self.bottleneck {
            Bottleneck::ResAspp { entry, aspp } => {
                let e = entry.forward(s, pooled)?;
                aspp.forward(s, e)?
            }
            Bottleneck::Double(d) => d.forward(s, pooled)?,
        };
        s.check_finite("bottleneck", cur)?;
        s.probe("bottleneck", cur);

        for (k, stage) in self.decoder.iter().enumerate() {
            let idx = 4 - k;
            let up = s.tape.upsample_bilinear2(cur)?;
            let up = stage.up().forward(s, up)?;
            let skip = skips[idx - 1];
            cur = match stage {
                DecoderStage::Conv { gate, block, .. } => {
                    let gated = match gate {
                        Some(g) => g.forward(s, skip, up)?,
                        None => skip,
                    };
                    let cat = s.tape.concat(&[gated, up])?;
                    block.forward(s, cat)?
                }
                DecoderStage::TokMlp { block, .. } => {
                    let sum = s.tape.add(up, skip)?;
                    block.forward(s, sum)?
                }
            };
            let label = format!("dec{idx}");
            s.check_finite(&label, cur)?;
            s.probe(&label, cur);
        }
        let logits = self.head.forward(s, cur)?;
        s.check_finite("head", logits)?;
        Ok(logits)
    }
}

impl<T: Scalar> Model<T> {
    pub fn build(cfg: ModelConfig, seed: u64) -> Result<Self> {
        build_msdcanet(cfg, seed)
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, _, _) = x.dims4()?;
        if c != self.config.in_channels {
            return Err(Error::shape(format!("model expects {} input channels, got {c}", self.config.in_channels)));
        }
        Ok(())
    }

    /// Evaluation-mode logits.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let mut s = Session::inference(&mut tape, &self.store);
        let y = self.net.forward(&mut s, xv)?;
        drop(s);
        Ok(tape.value(y).clone())
    }

    /// Evaluation-mode forward keeping the tape; the input is a
    /// gradient-requiring leaf.
    pub fn trace(&self, x: &Tensor<T>) -> Result<Trace<T>> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let input = tape.leaf(x.clone(), true);
        let mut s = Session::inference(&mut tape, &self.store);
        let logits = self.net.forward(&mut s, input)?;
        let probes = s.probes().clone();
        drop(s);
        Ok(Trace { tape, input, logits, probes })
    }

    pub fn param_count(&self) -> ParamCount {
        count_params(&self.store)
    }
}
