use serde::{Deserialize, Serialize};

use crate::blocks::{ResAspp, DEFAULT_SHIFTS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    S,
    M,
    L,
    Custom,
}

impl Variant {
    pub fn channels(self) -> Option<[usize; 5]> {
        match self {
            Variant::S => Some([8, 16, 32, 64, 128]),
            Variant::M => Some([16, 32, 128, 160, 256]),
            Variant::L => Some([32, 64, 128, 256, 512]),
            Variant::Custom => None,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S" => Ok(Variant::S),
            "M" => Ok(Variant::M),
            "L" => Ok(Variant::L),
            "CUSTOM" => Ok(Variant::Custom),
            other => Err(Error::invalid(format!("unknown variant {other:?} (expected S, M, L)"))),
        }
    }
}

/// Convolutional stage type used outside tokenized-MLP stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvBlockKind {
    DualChannel,
    DoubleConv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BottleneckKind {
    ResAspp,
    DoubleConv,
}

pub const DEFAULT_RATES: [usize; 4] = [4, 8, 16, 24];
pub const DEFAULT_TOK_STAGES: [usize; 2] = [3, 4];

/// Full architectural description of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Channel widths of encoder stages 1-4 and the bottleneck.
    pub channels: [usize; 5],
    pub dilation_rates: Vec<usize>,
    /// Encoder stages (and their decoder mirrors) built as tokenized MLP stages.
    pub tok_mlp_stages: Vec<usize>,
    pub shift_offsets: Vec<isize>,
    pub in_channels: usize,
    pub out_classes: usize,
    pub conv_block: ConvBlockKind,
    pub bottleneck: BottleneckKind,
    pub attention_gate: bool,
    pub dc_residual: bool,
}

impl ModelConfig {
    pub fn msdcanet(variant: Variant) -> Self {
        let channels = variant.channels().unwrap_or([8, 16, 32, 64, 128]);
        ModelConfig {
            variant,
            channels,
            dilation_rates: DEFAULT_RATES.to_vec(),
            tok_mlp_stages: DEFAULT_TOK_STAGES.to_vec(),
            shift_offsets: DEFAULT_SHIFTS.to_vec(),
            in_channels: 1,
            out_classes: 1,
            conv_block: ConvBlockKind::DualChannel,
            bottleneck: BottleneckKind::ResAspp,
            attention_gate: true,
            dc_residual: true,
        }
    }

    /// Classic 4-down/4-up UNet with double 3x3 convolutions.
    pub fn unet(channels: [usize; 5]) -> Self {
        ModelConfig {
            variant: Variant::Custom,
            channels,
            tok_mlp_stages: Vec::new(),
            conv_block: ConvBlockKind::DoubleConv,
            bottleneck: BottleneckKind::DoubleConv,
            attention_gate: false,
            ..Self::msdcanet(Variant::Custom)
        }
    }

    pub fn with_channels(mut self, channels: [usize; 5]) -> Self {
        self.channels = channels;
        self.variant = Variant::Custom;
        self
    }

    pub fn is_tok_stage(&self, stage: usize) -> bool {
        self.tok_mlp_stages.contains(&stage)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.channels.iter().find(|&&c| c < 8 || c % 2 != 0) {
            return Err(Error::invalid(format!("channels must be even and >= 8, got {c} in {:?}", self.channels)));
        }
        if let Some(v) = self.variant.channels() {
            if v != self.channels {
                return Err(Error::invalid(format!("variant {:?} implies channels {v:?}, got {:?}", self.variant, self.channels)));
            }
        }
        if let Some(s) = self.tok_mlp_stages.iter().find(|s| !(2..=4).contains(*s)) {
            return Err(Error::invalid(format!("tok_mlp_stages must be a subset of {{2,3,4}}, got {s}")));
        }
        let mut uniq = self.tok_mlp_stages.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != self.tok_mlp_stages.len() {
            return Err(Error::invalid("tok_mlp_stages contains duplicates"));
        }
        ResAspp::validate_rates(&self.dilation_rates)?;
        if self.shift_offsets.is_empty() {
            return Err(Error::invalid("shift_offsets must not be empty"));
        }
        for &s in &self.tok_mlp_stages {
            if self.channels[s - 1] < self.shift_offsets.len() {
                return Err(Error::invalid(format!(
                    "stage {s} width {} cannot hold {} shift groups",
                    self.channels[s - 1],
                    self.shift_offsets.len()
                )));
            }
        }
        if self.in_channels == 0 {
            return Err(Error::invalid("in_channels must be >= 1"));
        }
        if self.out_classes != 1 {
            return Err(Error::invalid("only a single sigmoid output class is supported"));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::msdcanet(Variant::M)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_channels() {
        assert_eq!(ModelConfig::msdcanet(Variant::M).channels, [16, 32, 128, 160, 256]);
        assert_eq!(ModelConfig::msdcanet(Variant::S).channels, [8, 16, 32, 64, 128]);
        assert_eq!(ModelConfig::msdcanet(Variant::L).channels, [32, 64, 128, 256, 512]);
        for v in [Variant::S, Variant::M, Variant::L] {
            ModelConfig::msdcanet(v).validate().unwrap();
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::msdcanet(Variant::S);
        c.tok_mlp_stages = vec![1, 3];
        assert!(c.validate().is_err());
        let c = ModelConfig::msdcanet(Variant::Custom).with_channels([8, 16, 6, 64, 128]);
        assert!(c.validate().is_err());
        let mut c = ModelConfig::msdcanet(Variant::S);
        c.dilation_rates = vec![4, 4, 8];
        assert!(c.validate().is_err());
        let mut c = ModelConfig::msdcanet(Variant::S);
        c.channels[0] = 16;
        assert!(c.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = ModelConfig::msdcanet(Variant::L);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
    }
}
