//! Checkpoint directories: `manifest.txt` plus one tensor file per
//! parameter and per running-statistics buffer.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::BnStats;
use crate::error::{Error, Result};
use crate::{ParamStore, Tensor};

use super::config::ModelConfig;

const MAGIC: &str = "afnet-checkpoint 1";

fn fmt_shape(s: &[usize]) -> String {
    s.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub fn save_checkpoint(dir: impl AsRef<Path>, config: &ModelConfig, params: &ParamStore) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("params"))?;
    fs::create_dir_all(dir.join("bn"))?;
    let mut m = format!("{MAGIC}\n");
    for (k, v) in config.to_pairs() {
        let _ = writeln!(m, "config {k}={v}");
    }
    for (name, t) in params.iter() {
        let _ = writeln!(m, "param {name} {}", fmt_shape(t.shape()));
        t.save(dir.join("params").join(format!("{name}.aftn")))?;
    }
    for (name, s) in params.bn_iter() {
        let _ = writeln!(m, "bn {name} {}", s.mean.len());
        let c = s.mean.len();
        Tensor::new(&[c], s.mean.clone())?.save(dir.join("bn").join(format!("{name}.mean.aftn")))?;
        Tensor::new(&[c], s.var.clone())?.save(dir.join("bn").join(format!("{name}.var.aftn")))?;
    }
    fs::write(dir.join("manifest.txt"), m)?;
    Ok(())
}

pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(ModelConfig, ParamStore)> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l) != Some(MAGIC) {
        return Err(Error::Format("not a checkpoint manifest".into()));
    }
    let mut config = ModelConfig::default();
    let mut params = ParamStore::new();
    for (i, line) in lines {
        let bad = || Error::Format(format!("manifest line {}: `{line}`", i + 1));
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some("config"), Some(kv), None) => {
                let (k, v) = kv.split_once('=').ok_or_else(bad)?;
                config.set(k, v)?;
            }
            (Some("param"), Some(name), Some(shape)) => {
                let t = Tensor::load(dir.join("params").join(format!("{name}.aftn")))?;
                if fmt_shape(t.shape()) != shape {
                    return Err(Error::Format(format!("{name}: stored shape differs from manifest")));
                }
                params.insert(name, t);
            }
            (Some("bn"), Some(name), Some(ch)) => {
                let ch: usize = ch.parse().map_err(|_| bad())?;
                let mean = Tensor::load(dir.join("bn").join(format!("{name}.mean.aftn")))?;
                let var = Tensor::load(dir.join("bn").join(format!("{name}.var.aftn")))?;
                if mean.numel() != ch || var.numel() != ch {
                    return Err(Error::Format(format!("{name}: running stats size mismatch")));
                }
                params.insert_bn(name, BnStats { mean: mean.into_data(), var: var.into_data() });
            }
            (None, ..) => {}
            _ => return Err(bad()),
        }
    }
    config.validate()?;
    Ok((config, params))
}
