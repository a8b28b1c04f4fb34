use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rng::{derive_seed_idx, rng_from_seed};

use super::config::TrainConfig;
use super::dataset::Dataset;
use super::train::{echo, evaluate_on, train_on, ConfusionMatrix, RunLog};

/// Subject-disjoint fold assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<u64>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn fold_of(&self, subject: u64) -> Option<usize> {
        self.folds.iter().position(|f| f.contains(&subject))
    }
}

/// Sorts and de-duplicates the ids, shuffles them with `seed`, then deals
/// them round-robin into `k` folds.
pub fn build_folds(subject_ids: &[u64], k: usize, seed: u64) -> Result<FoldPlan> {
    let mut ids: Vec<u64> = subject_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if k < 2 {
        return Err(Error::Config(format!("k = {k}: cross-validation needs at least 2 folds")));
    }
    if k > ids.len() {
        return Err(Error::Config(format!("k = {k} exceeds the {} available subjects", ids.len())));
    }
    ids.shuffle(&mut rng_from_seed(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    Ok(FoldPlan { k, folds, seed })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub repeat: usize,
    pub fold: usize,
    pub train_size: usize,
    pub eval_size: usize,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub log: RunLog,
}

/// Everything a protocol run produces. Timing lives in `wall_time_s` and in
/// the per-fold logs, and is excluded from equality and from the report
/// files other than the timing file.
#[derive(Debug, Clone)]
pub struct ProtocolReport {
    pub config_echo: String,
    pub repeats: usize,
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub wall_time_s: f64,
}

impl PartialEq for ProtocolReport {
    fn eq(&self, o: &Self) -> bool {
        self.config_echo == o.config_echo
            && self.repeats == o.repeats
            && self.k == o.k
            && self.folds == o.folds
            && self.mean_accuracy == o.mean_accuracy
            && self.std_accuracy == o.std_accuracy
            && self.confusion == o.confusion
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Repeated subject-disjoint k-fold cross-validation. Repeat `r` uses the
/// fold plan seeded with `train.seed + r`; every rotation starts from a fresh
/// initialization derived from the model seed and the rotation index.
pub fn run_protocol(
    model: &ModelConfig,
    train: &TrainConfig,
    data: &Dataset,
    repeats: usize,
    k: usize,
) -> Result<ProtocolReport> {
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    model.validate()?;
    train.validate()?;
    let start = Instant::now();
    let subjects = data.subjects();
    let mut folds = Vec::with_capacity(repeats * k);
    for r in 0..repeats {
        let plan = build_folds(&subjects, k, train.seed.wrapping_add(r as u64))?;
        for (f, held_out) in plan.folds.iter().enumerate() {
            let rotation = (r * k + f) as u64;
            let (mut tr, mut ev) = (Vec::new(), Vec::new());
            for (i, it) in data.items.iter().enumerate() {
                if held_out.contains(&it.subject) { ev.push(i) } else { tr.push(i) }
            }
            let mut mc = model.clone();
            mc.seed = derive_seed_idx(model.seed, "rotation", rotation);
            let mut tc = train.clone();
            tc.seed = derive_seed_idx(train.seed, "rotation", rotation);
            let (params, mut log) = train_on(&mc, &tc, data, &tr)?;
            let (accuracy, confusion) = evaluate_on(&params, &mc, data, &ev)?;
            log.final_accuracy = Some(accuracy);
            folds.push(FoldResult {
                repeat: r,
                fold: f,
                train_size: tr.len(),
                eval_size: ev.len(),
                accuracy,
                confusion,
                log,
            });
        }
    }
    let accs: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&accs);
    let mut confusion = ConfusionMatrix::default();
    for f in &folds {
        confusion.merge(&f.confusion);
    }
    Ok(ProtocolReport {
        config_echo: format!("{};repeats={repeats};k={k}", echo(model, train)),
        repeats,
        k,
        folds,
        mean_accuracy,
        std_accuracy,
        confusion,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

impl ProtocolReport {
    pub fn folds_csv(&self) -> String {
        let mut out = String::from("repeat,fold,train_size,eval_size,accuracy,initial_loss,final_loss\n");
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.12},{:.12},{:.12}",
                f.repeat,
                f.fold,
                f.train_size,
                f.eval_size,
                f.accuracy,
                f.log.initial_loss(),
                f.log.final_loss()
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "config: {}\nrotations: {}\nmean accuracy: {:.6}\nstd accuracy: {:.6}\npooled accuracy: {:.6}\nconfusion (rows = true, cols = predicted):\n{}",
            self.config_echo,
            self.folds.len(),
            self.mean_accuracy,
            self.std_accuracy,
            self.confusion.accuracy(),
            self.confusion
        )
    }

    /// Writes `<stem>_folds.csv`, `<stem>_summary.txt`, `<stem>_confusion.csv`,
    /// `<stem>_confusion.aftn` and, separately, `<stem>_timing.txt`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}_folds.csv")), self.folds_csv())?;
        fs::write(dir.join(format!("{stem}_summary.txt")), self.summary())?;
        fs::write(dir.join(format!("{stem}_confusion.csv")), self.confusion.to_csv())?;
        self.confusion.to_tensor().save(dir.join(format!("{stem}_confusion.aftn")))?;
        let mut timing = format!("total_s={:.3}\n", self.wall_time_s);
        for f in &self.folds {
            let _ = writeln!(timing, "repeat={} fold={} train_s={:.3}", f.repeat, f.fold, f.log.wall_time_s);
        }
        fs::write(dir.join(format!("{stem}_timing.txt")), timing)?;
        Ok(())
    }
}
