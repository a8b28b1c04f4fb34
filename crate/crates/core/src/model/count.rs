//! Closed-form parameter accounting. Batchnorm scale and shift are counted;
//! running statistics are not.

use std::fmt::Write as _;

use super::config::{FusionStrategy, Modality, ModelConfig, Stage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCount {
    /// `(component, count)` in network order. Every parameter name starts
    /// with exactly one component followed by a dot.
    pub components: Vec<(String, usize)>,
    pub total: usize,
}

impl ParamCount {
    /// Size at four bytes per parameter.
    pub fn bytes(&self) -> usize {
        self.total * 4
    }

    pub fn get(&self, component: &str) -> Option<usize> {
        self.components.iter().find(|(n, _)| n == component).map(|&(_, c)| c)
    }

    fn kind_total(&self, kind: &str) -> usize {
        self.components
            .iter()
            .filter(|(n, _)| n.rsplit('.').next().is_some_and(|last| last.starts_with(kind)))
            .map(|&(_, c)| c)
            .sum()
    }

    pub fn ma_total(&self) -> usize {
        self.kind_total("ma")
    }

    pub fn iwc_total(&self) -> usize {
        self.kind_total("iwc")
    }

    pub fn table(&self) -> String {
        let mut s = String::from("component,params\n");
        for (n, c) in &self.components {
            let _ = writeln!(s, "{n},{c}");
        }
        let _ = writeln!(s, "total,{}", self.total);
        let _ = writeln!(s, "bytes,{}", self.bytes());
        let _ = writeln!(s, "megabytes,{:.2}", self.bytes() as f64 / (1024.0 * 1024.0));
        s
    }
}

fn conv(cin: usize, cout: usize, k: usize) -> usize {
    cout * cin * k * k + cout
}

fn bn(c: usize) -> usize {
    2 * c
}

fn fc(a: usize, b: usize) -> usize {
    a * b + b
}

pub fn count_params(config: &ModelConfig) -> ParamCount {
    let c = config;
    let both = c.modality == Modality::Both;
    let branches: Vec<(&str, usize)> = match c.modality {
        Modality::Texture => vec![("texture", 3)],
        Modality::Depth => vec![("depth", 3)],
        Modality::Both if c.fusion_strategy == FusionStrategy::DataLevel => vec![("joint", 6)],
        Modality::Both => vec![("texture", 3), ("depth", 3)],
    };
    let mut comps = Vec::new();
    for &(br, cin) in &branches {
        comps.push((format!("{br}.stem"), conv(cin, c.widths[0], 7) + bn(c.widths[0])));
        let mut prev = c.widths[0];
        for stage in Stage::ALL {
            let w = c.width(stage);
            let n = stage.number();
            let mut total = 0;
            for i in 0..c.blocks_per_layer {
                let bin = if i == 0 { prev } else { w };
                total += conv(bin, w, 3) + bn(w) + conv(w, w, 3) + bn(w);
                if i == 0 && n > 1 {
                    total += conv(bin, w, 1) + bn(w);
                }
            }
            comps.push((format!("{br}.layer{n}"), total));
            if c.ma_enabled && c.ma_positions.contains(&stage) {
                comps.push((format!("{br}.ma{n}"), 4 * conv(w, w, 1)));
            }
            if both
                && c.fusion_strategy == FusionStrategy::ConvAdaptive
                && c.fusion_positions.contains(&stage)
            {
                comps.push((format!("{br}.iwc{n}"), conv(w, w, 1)));
            }
            prev = w;
        }
    }
    let w = c.widths[3];
    let head = |d: usize| fc(d, w / 2) + fc(w / 2, w / 4) + fc(w / 4, c.num_classes);
    match (branches.len(), c.fusion_strategy) {
        (2, FusionStrategy::DecisionLevel) => {
            comps.push(("texture.head".into(), head(w)));
            comps.push(("depth.head".into(), head(w)));
        }
        (2, FusionStrategy::FcConcat) => comps.push(("head".into(), head(2 * w))),
        _ => comps.push(("head".into(), head(w))),
    }
    let total = comps.iter().map(|(_, n)| n).sum();
    ParamCount { components: comps, total }
}
