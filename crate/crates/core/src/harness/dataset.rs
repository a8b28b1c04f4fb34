use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::ModelInput;
use crate::preprocess::{preprocess_scan, synth_scan, Expression, Sample, Scan};
use crate::rng::derive_seed_idx;
use crate::Tensor;

/// One preprocessed scan. Images are `[3,S,S]`, masks `[1,S/4,S/4]` and
/// `[1,S/8,S/8]`. A modality may be absent when nothing needs it.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub name: String,
    pub subject: u64,
    pub label: usize,
    pub texture: Option<Tensor>,
    pub depth: Option<Tensor>,
    pub mask1: Option<Tensor>,
    pub mask2: Option<Tensor>,
}

impl Item {
    pub fn from_sample(name: impl Into<String>, scan: &Scan, sample: Sample) -> Self {
        Self {
            name: name.into(),
            subject: scan.subject_id,
            label: scan.expression.label(),
            texture: Some(sample.pair.texture),
            depth: Some(sample.pair.depth),
            mask1: Some(sample.masks.mask1),
            mask2: Some(sample.masks.mask2),
        }
    }
}

/// Which parts of each item a run needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Needs {
    pub texture: bool,
    pub depth: bool,
    pub masks: bool,
}

impl Needs {
    pub const ALL: Needs = Needs { texture: true, depth: true, masks: true };

    pub fn of(config: &crate::model::ModelConfig) -> Self {
        Self {
            texture: config.modality.uses_texture(),
            depth: config.modality.uses_depth(),
            masks: config.needs_masks(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub size: usize,
    pub items: Vec<Item>,
}

const INDEX: &str = "index.csv";

/// Subject ids used by [`Dataset::synthetic`].
pub fn synthetic_subjects(count: usize, seed: u64) -> Vec<u64> {
    (0..count as u64).map(|s| derive_seed_idx(seed, "subject", s) % 1_000_000_000).collect()
}

/// File stem of a synthetic scan.
pub fn scan_name(subject: u64, expression: Expression) -> String {
    format!("s{subject:09}_{expression}")
}

impl Dataset {
    /// `subjects × 6` synthetic scans pushed through the full preprocessing
    /// pipeline. Subject ids are derived from `seed`.
    pub fn synthetic(subjects: usize, size: usize, intensity: u8, seed: u64) -> Result<Self> {
        let mut items = Vec::with_capacity(subjects * 6);
        for subject in synthetic_subjects(subjects, seed) {
            for e in Expression::ALL {
                let scan = synth_scan(e, subject, intensity)?;
                let sample = preprocess_scan(&scan, size)?;
                items.push(Item::from_sample(scan_name(subject, e), &scan, sample));
            }
        }
        Ok(Self { size, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Sorted distinct subject ids.
    pub fn subjects(&self) -> Vec<u64> {
        self.items.iter().map(|i| i.subject).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn check(&self, needs: Needs) -> Result<()> {
        for it in &self.items {
            let missing = [
                (needs.texture && it.texture.is_none(), "texture"),
                (needs.depth && it.depth.is_none(), "depth"),
                (needs.masks && (it.mask1.is_none() || it.mask2.is_none()), "masks"),
            ];
            if let Some((_, what)) = missing.iter().find(|(m, _)| *m) {
                return Err(Error::Data(format!("item {} has no {what}", it.name)));
            }
        }
        Ok(())
    }

    /// Stacks the selected items into a network batch plus labels.
    pub fn batch(&self, indices: &[usize], needs: Needs) -> Result<(ModelInput, Vec<usize>)> {
        let items: Vec<&Item> = indices.iter().map(|&i| &self.items[i]).collect();
        let stack = |get: &dyn Fn(&Item) -> Option<&Tensor>, what: &str| -> Result<Tensor> {
            let ts: Vec<&Tensor> = items
                .iter()
                .map(|it| get(it).ok_or_else(|| Error::Data(format!("item {} has no {what}", it.name))))
                .collect::<Result<_>>()?;
            Tensor::stack(&ts)
        };
        let input = ModelInput {
            texture: if needs.texture { Some(stack(&|i| i.texture.as_ref(), "texture")?) } else { None },
            depth: if needs.depth { Some(stack(&|i| i.depth.as_ref(), "depth")?) } else { None },
            mask1: if needs.masks { Some(stack(&|i| i.mask1.as_ref(), "mask1")?) } else { None },
            mask2: if needs.masks { Some(stack(&|i| i.mask2.as_ref(), "mask2")?) } else { None },
        };
        Ok((input, items.iter().map(|i| i.label).collect()))
    }

    /// Writes `index.csv` and one tensor file per item part.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut index = format!("# size={}\nname,subject,label\n", self.size);
        for it in &self.items {
            let _ = writeln!(index, "{},{},{}", it.name, it.subject, it.label);
            let parts = [("texture", &it.texture), ("depth", &it.depth), ("mask1", &it.mask1), ("mask2", &it.mask2)];
            for (part, t) in parts {
                if let Some(t) = t {
                    t.save(dir.join(format!("{}.{part}.aftn", it.name)))?;
                }
            }
        }
        fs::write(dir.join(INDEX), index)?;
        Ok(())
    }

    /// Reads a directory written by [`Dataset::save`], loading only the parts
    /// in `needs`. Unneeded files may be absent.
    pub fn load(dir: impl AsRef<Path>, needs: Needs) -> Result<Self> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join(INDEX))?;
        let mut size = None;
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let bad = || Error::Data(format!("{INDEX} line {}: `{line}`", i + 1));
            if let Some(rest) = line.strip_prefix("# size=") {
                size = Some(rest.trim().parse().map_err(|_| bad())?);
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') || line == "name,subject,label" {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let [name, subject, label] = f[..] else { return Err(bad()) };
            let load = |part: &str, want: bool| -> Result<Option<Tensor>> {
                if !want {
                    return Ok(None);
                }
                let p = dir.join(format!("{name}.{part}.aftn"));
                Tensor::load(&p).map(Some).map_err(|e| Error::Data(format!("{}: {e}", p.display())))
            };
            let label: usize = label.parse().map_err(|_| bad())?;
            if label >= 6 {
                return Err(bad());
            }
            items.push(Item {
                name: name.to_string(),
                subject: subject.parse().map_err(|_| bad())?,
                label,
                texture: load("texture", needs.texture)?,
                depth: load("depth", needs.depth)?,
                mask1: load("mask1", needs.masks)?,
                mask2: load("mask2", needs.masks)?,
            });
        }
        let size = size.ok_or_else(|| Error::Data(format!("{INDEX} has no size header")))?;
        Ok(Self { size, items })
    }
}
