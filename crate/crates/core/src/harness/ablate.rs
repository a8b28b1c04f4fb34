use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{FusionStrategy, Modality, ModelConfig, Stage};

use super::config::TrainConfig;
use super::dataset::Dataset;
use super::protocol::{run_protocol, ProtocolReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    /// The five fusion strategies, mask attention off.
    FusionStrategy,
    /// Texture, depth and both, each with and without mask attention.
    MaAndModality,
    /// Sets of stages at which adaptive fusion happens.
    FusionPositions,
}

impl AblationAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FusionStrategy => "fusion",
            Self::MaAndModality => "ma",
            Self::FusionPositions => "positions",
        }
    }
}

impl FromStr for AblationAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fusion" | "fusion_strategy" => Ok(Self::FusionStrategy),
            "ma" | "ma_and_modality" => Ok(Self::MaAndModality),
            "positions" | "fusion_positions" => Ok(Self::FusionPositions),
            other => Err(Error::Config(format!(
                "unknown ablation axis `{other}` (expected fusion, ma or positions)"
            ))),
        }
    }
}

/// Fusion position sets swept on the positions axis.
pub const POSITION_SETS: [&[Stage]; 7] = [
    &[Stage::Layer1],
    &[Stage::Layer2],
    &[Stage::Layer3],
    &[Stage::Layer4],
    &[Stage::Layer3, Stage::Layer4],
    &[Stage::Layer2, Stage::Layer3, Stage::Layer4],
    &[Stage::Layer1, Stage::Layer2, Stage::Layer3, Stage::Layer4],
];

fn stage_label(stages: &BTreeSet<Stage>) -> String {
    let digits: String = stages.iter().map(|s| s.number().to_string()).collect();
    format!("Layer{digits}")
}

fn with_strategy(base: &ModelConfig, strategy: FusionStrategy) -> ModelConfig {
    let mut c = base.clone();
    c.modality = Modality::Both;
    c.fusion_strategy = strategy;
    c.iwc_enabled = strategy == FusionStrategy::ConvAdaptive;
    if strategy.is_conv_level() && c.fusion_positions.is_empty() {
        c.fusion_positions = [Stage::Layer3, Stage::Layer4].into();
    }
    c
}

fn with_ma(mut c: ModelConfig, on: bool) -> ModelConfig {
    c.ma_enabled = on;
    if on && c.ma_positions.is_empty() {
        c.ma_positions = [Stage::Layer1, Stage::Layer2].into();
    }
    c
}

/// The labelled configurations on one axis, derived from `base`.
pub fn ablation_configs(axis: AblationAxis, base: &ModelConfig) -> Vec<(String, ModelConfig)> {
    match axis {
        AblationAxis::FusionStrategy => FusionStrategy::ALL
            .iter()
            .map(|&s| (s.table_label().to_string(), with_ma(with_strategy(base, s), false)))
            .collect(),
        AblationAxis::MaAndModality => {
            let mut rows = Vec::new();
            for (name, modality) in [("2D", Modality::Texture), ("3D", Modality::Depth), ("2D+3D", Modality::Both)] {
                for ma in [false, true] {
                    let mut c = with_strategy(base, FusionStrategy::ConvAdaptive);
                    c.modality = modality;
                    c.iwc_enabled = modality == Modality::Both;
                    let label = format!("{name} {}", if ma { "w/ MA" } else { "w/o MA" });
                    rows.push((label, with_ma(c, ma)));
                }
            }
            rows
        }
        AblationAxis::FusionPositions => POSITION_SETS
            .iter()
            .map(|set| {
                let mut c = with_strategy(base, FusionStrategy::ConvAdaptive);
                c.fusion_positions = set.iter().copied().collect();
                (stage_label(&c.fusion_positions), c)
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub label: String,
    pub report: ProtocolReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub axis: AblationAxis,
    pub rows: Vec<AblationRow>,
}

/// Runs the protocol once per configuration on `axis`.
pub fn ablate(
    data: &Dataset,
    axis: AblationAxis,
    base: &ModelConfig,
    train: &TrainConfig,
    repeats: usize,
    k: usize,
) -> Result<AblationReport> {
    let mut rows = Vec::new();
    for (label, config) in ablation_configs(axis, base) {
        let report = run_protocol(&config, train, data, repeats, k)?;
        rows.push(AblationRow { label, report });
    }
    Ok(AblationReport { axis, rows })
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,row,mean_accuracy,std_accuracy,pooled_accuracy,config\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.12},{:.12},{:.12},\"{}\"",
                self.axis.as_str(),
                r.label,
                r.report.mean_accuracy,
                r.report.std_accuracy,
                r.report.confusion.accuracy(),
                r.report.config_echo
            );
        }
        out
    }

    /// Fixed-width table with rows in evaluation order and, below it, the
    /// row labels ranked by mean accuracy.
    pub fn to_table(&self) -> String {
        let mut out = format!("ablation axis: {}\n{:<16}{:>12}{:>10}\n", self.axis.as_str(), "row", "accuracy", "std");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<16}{:>11.2}%{:>9.2}%",
                r.label,
                100.0 * r.report.mean_accuracy,
                100.0 * r.report.std_accuracy
            );
        }
        let mut ranked: Vec<&AblationRow> = self.rows.iter().collect();
        ranked.sort_by(|a, b| b.report.mean_accuracy.total_cmp(&a.report.mean_accuracy));
        let names: Vec<&str> = ranked.iter().map(|r| r.label.as_str()).collect();
        let _ = writeln!(out, "ranking: {}", names.join(" > "));
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let stem = format!("ablation_{}", self.axis.as_str());
        fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        fs::write(dir.join(format!("{stem}.txt")), self.to_table())?;
        for (i, r) in self.rows.iter().enumerate() {
            r.report.write(dir.join(&stem), &format!("row{i}"))?;
        }
        Ok(())
    }
}
