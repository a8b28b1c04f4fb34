//! Configuration files and run manifests for the `afnet` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use afnet::harness::TrainConfig;
use afnet::model::ModelConfig;
use anyhow::{bail, Context, Result};

/// Everything a run is configured with.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { model: ModelConfig::default(), train: TrainConfig::default() }
    }
}

impl RunConfig {
    /// Routes one `key=value` to the model or training settings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        if ModelConfig::KEYS.contains(&key) {
            self.model.set(key, value)?;
        } else if TrainConfig::KEYS.contains(&key) {
            self.train.set(key, value)?;
        } else {
            bail!("unknown key `{key}`");
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    /// Errors name the offending line.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let Some((k, v)) = line.split_once('=') else {
                bail!("{origin} line {lineno}: expected key=value, got `{line}`");
            };
            self.set(k, v).with_context(|| format!("{origin} line {lineno}"))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut p = self.model.to_pairs();
        p.extend(self.train.to_pairs());
        p
    }

    /// The resolved configuration in the same format [`load_config`] reads.
    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Defaults overridden by the file at `path`.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = RunConfig::default();
    cfg.apply_text(&text, &path.display().to_string())?;
    Ok(cfg)
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Record written next to the outputs of every run.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: Vec<(String, String)>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started: f64,
    pub finished: Option<f64>,
}

pub const MANIFEST_FILE: &str = "run_manifest.txt";

impl RunManifest {
    pub fn start(command: &str, argv: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            argv,
            config: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: unix_now(),
            finished: None,
        }
    }

    pub fn with_config(mut self, pairs: Vec<(&'static str, String)>) -> Self {
        self.config = pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        self
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "command={}\ntool=afnet {}\nargv={}\nstarted_unix={:.3}\nfinished_unix={}\n",
            self.command,
            env!("CARGO_PKG_VERSION"),
            self.argv.join(" "),
            self.started,
            self.finished.map_or("-".into(), |t| format!("{t:.3}")),
        );
        for p in &self.inputs {
            s += &format!("input={}\n", p.display());
        }
        for p in &self.outputs {
            s += &format!("output={}\n", p.display());
        }
        for (k, v) in &self.config {
            s += &format!("config.{k}={v}\n");
        }
        s
    }

    /// Stamps the finish time and writes `run_manifest.txt` into `dir`.
    pub fn finish(mut self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        self.finished = Some(unix_now());
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.render())?;
        Ok(path)
    }
}
