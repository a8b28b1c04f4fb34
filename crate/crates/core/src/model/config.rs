use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Where and how the two modalities are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FusionStrategy {
    /// S1: texture and depth stacked on the channel axis before a single backbone.
    DataLevel,
    /// S2: two complete networks whose softmax outputs are averaged.
    DecisionLevel,
    /// S3: pooled feature vectors concatenated before the classifier head.
    FcConcat,
    /// S4: unweighted sum of conv feature maps at the fusion positions.
    ConvSum,
    /// Importance-weighted sum of conv feature maps at the fusion positions.
    ConvAdaptive,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 5] = [
        Self::DataLevel,
        Self::DecisionLevel,
        Self::FcConcat,
        Self::ConvSum,
        Self::ConvAdaptive,
    ];

    pub fn is_conv_level(self) -> bool {
        matches!(self, Self::ConvSum | Self::ConvAdaptive)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::DataLevel => "data",
            Self::DecisionLevel => "decision",
            Self::FcConcat => "fc-concat",
            Self::ConvSum => "conv-sum",
            Self::ConvAdaptive => "conv-adaptive",
        }
    }

    /// Row label used in the fusion-strategy ablation table.
    pub fn table_label(self) -> &'static str {
        match self {
            Self::DataLevel => "S1",
            Self::DecisionLevel => "S2",
            Self::FcConcat => "S3(FC)",
            Self::ConvSum => "S4",
            Self::ConvAdaptive => "Ours",
        }
    }
}

impl fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown fusion strategy `{s}`")))
    }
}

/// Residual stage of the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Layer1,
    Layer2,
    Layer3,
    Layer4,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Self::Layer1, Self::Layer2, Self::Layer3, Self::Layer4];

    /// 1-based layer number.
    pub fn number(self) -> usize {
        self as usize + 1
    }

    pub fn from_number(n: usize) -> Result<Self> {
        Self::ALL
            .get(n.wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Config(format!("no layer {n}")))
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.number())
    }
}

/// Which inputs the network consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Both,
    Texture,
    Depth,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Both => "both",
            Self::Texture => "texture",
            Self::Depth => "depth",
        }
    }

    pub fn uses_texture(self) -> bool {
        self != Self::Depth
    }

    pub fn uses_depth(self) -> bool {
        self != Self::Texture
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" | "2d+3d" => Ok(Self::Both),
            "texture" | "2d" => Ok(Self::Texture),
            "depth" | "3d" => Ok(Self::Depth),
            _ => Err(Error::Config(format!("unknown modality `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub input_size: usize,
    /// Output channels of layers 1..4; the stem emits `widths[0]`.
    pub widths: [usize; 4],
    pub blocks_per_layer: usize,
    pub ma_enabled: bool,
    pub ma_positions: BTreeSet<Stage>,
    pub iwc_enabled: bool,
    pub fusion_strategy: FusionStrategy,
    pub fusion_positions: BTreeSet<Stage>,
    pub modality: Modality,
    pub num_classes: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Full-scale network: 224 px input, ResNet18 widths.
    fn default() -> Self {
        Self {
            input_size: 224,
            widths: [64, 128, 256, 512],
            blocks_per_layer: 2,
            ma_enabled: true,
            ma_positions: [Stage::Layer1, Stage::Layer2].into(),
            iwc_enabled: true,
            fusion_strategy: FusionStrategy::ConvAdaptive,
            fusion_positions: [Stage::Layer3, Stage::Layer4].into(),
            modality: Modality::Both,
            num_classes: 6,
            seed: 0,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got `{v}`"))),
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{v}`")))
}

fn parse_stages(key: &str, v: &str) -> Result<BTreeSet<Stage>> {
    let mut out = BTreeSet::new();
    for tok in v.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let n = tok.trim_start_matches(['L', 'l']);
        let n: usize = parse_num(key, n)?;
        out.insert(Stage::from_number(n)?);
    }
    Ok(out)
}

fn fmt_stages(s: &BTreeSet<Stage>) -> String {
    s.iter()
        .map(|st| st.number().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl ModelConfig {
    /// Desk-scale network used throughout the tests: 32 px input and widths
    /// `[8, 16, 32, 64]`, preserving every architectural ratio.
    pub fn toy() -> Self {
        Self {
            input_size: 32,
            widths: [8, 16, 32, 64],
            ..Self::default()
        }
    }

    pub fn mask1_size(&self) -> usize {
        self.input_size / 4
    }

    pub fn mask2_size(&self) -> usize {
        self.input_size / 8
    }

    pub fn width(&self, stage: Stage) -> usize {
        self.widths[stage as usize]
    }

    /// Whether both modality branches are instantiated.
    pub fn dual_branch(&self) -> bool {
        self.modality == Modality::Both && self.fusion_strategy != FusionStrategy::DataLevel
    }

    pub fn ma_at(&self, stage: Stage) -> bool {
        self.ma_enabled && self.ma_positions.contains(&stage)
    }

    pub fn fuses_at(&self, stage: Stage) -> bool {
        self.modality == Modality::Both
            && self.fusion_strategy.is_conv_level()
            && self.fusion_positions.contains(&stage)
    }

    pub fn needs_masks(&self) -> bool {
        self.ma_enabled && !self.ma_positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.input_size < 32 || self.input_size % 32 != 0 {
            return cfg(format!(
                "input_size {} must be a positive multiple of 32",
                self.input_size
            ));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return cfg("channel widths must be positive".into());
        }
        if self.widths.windows(2).any(|p| p[1] != 2 * p[0]) {
            return cfg(format!("widths {:?} must double at every layer", self.widths));
        }
        if self.widths[3] < 4 {
            return cfg("final width must be at least 4 for the classifier head".into());
        }
        if self.blocks_per_layer == 0 {
            return cfg("blocks_per_layer must be at least 1".into());
        }
        if self.num_classes < 2 {
            return cfg("num_classes must be at least 2".into());
        }
        if let Some(s) = self
            .ma_positions
            .iter()
            .find(|s| !matches!(s, Stage::Layer1 | Stage::Layer2))
        {
            return cfg(format!("mask attention is only defined at L1/L2, got {s}"));
        }
        if self.modality == Modality::Both {
            if self.fusion_strategy.is_conv_level() && self.fusion_positions.is_empty() {
                return cfg("conv-level fusion needs at least one fusion position".into());
            }
            let adaptive = self.fusion_strategy == FusionStrategy::ConvAdaptive;
            if self.iwc_enabled != adaptive {
                return cfg(format!(
                    "iwc_enabled={} is inconsistent with fusion_strategy={}",
                    self.iwc_enabled, self.fusion_strategy
                ));
            }
        } else if self.iwc_enabled {
            return cfg("importance weights need both modalities".into());
        }
        Ok(())
    }

    /// Sets one field from its textual form. Keys match [`Self::to_pairs`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "input_size" => self.input_size = parse_num(key, v)?,
            "widths" => {
                let ws: Vec<usize> = v
                    .split(',')
                    .map(|t| parse_num(key, t.trim()))
                    .collect::<Result<_>>()?;
                self.widths = ws
                    .try_into()
                    .map_err(|_| Error::Config("widths needs exactly four values".into()))?;
            }
            "blocks_per_layer" => self.blocks_per_layer = parse_num(key, v)?,
            "ma_enabled" => self.ma_enabled = parse_bool(key, v)?,
            "ma_positions" => self.ma_positions = parse_stages(key, v)?,
            "iwc_enabled" => self.iwc_enabled = parse_bool(key, v)?,
            "fusion_strategy" => self.fusion_strategy = v.parse()?,
            "fusion_positions" => self.fusion_positions = parse_stages(key, v)?,
            "modality" => self.modality = v.parse()?,
            "num_classes" => self.num_classes = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown model key `{key}`"))),
        }
        Ok(())
    }

    pub const KEYS: [&'static str; 11] = [
        "input_size",
        "widths",
        "blocks_per_layer",
        "ma_enabled",
        "ma_positions",
        "iwc_enabled",
        "fusion_strategy",
        "fusion_positions",
        "modality",
        "num_classes",
        "seed",
    ];

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("input_size", self.input_size.to_string()),
            (
                "widths",
                self.widths.map(|w| w.to_string()).join(","),
            ),
            ("blocks_per_layer", self.blocks_per_layer.to_string()),
            ("ma_enabled", self.ma_enabled.to_string()),
            ("ma_positions", fmt_stages(&self.ma_positions)),
            ("iwc_enabled", self.iwc_enabled.to_string()),
            ("fusion_strategy", self.fusion_strategy.to_string()),
            ("fusion_positions", fmt_stages(&self.fusion_positions)),
            ("modality", self.modality.as_str().to_string()),
            ("num_classes", self.num_classes.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Compact one-line description for reports.
    pub fn echo(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}
