use std::fmt;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::model::{AfNet, Ctx, ModelConfig};
use crate::optim::{adam_step, AdamState};
use crate::params::ParamStore;
use crate::rng::{derive_seed_idx, rng_from_seed};
use crate::{Tape, Tensor};

use super::config::TrainConfig;
use super::dataset::{Dataset, Needs};

pub const NUM_CLASSES: usize = 6;
const EVAL_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub loss: f64,
    pub accuracy: f64,
}

/// Training history. Wall time is ignored by `==` so that logs of two runs
/// with identical seeds compare equal.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub epochs: Vec<EpochLog>,
    pub final_accuracy: Option<f64>,
    pub wall_time_s: f64,
    pub config_echo: String,
}

impl PartialEq for RunLog {
    fn eq(&self, other: &Self) -> bool {
        self.epochs == other.epochs
            && self.final_accuracy == other.final_accuracy
            && self.config_echo == other.config_echo
    }
}

impl RunLog {
    pub fn initial_loss(&self) -> f64 {
        self.epochs.first().map_or(f64::NAN, |e| e.loss)
    }

    pub fn final_loss(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.loss)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,accuracy\n");
        for (i, e) in self.epochs.iter().enumerate() {
            out += &format!("{},{:.12},{:.12}\n", i + 1, e.loss, e.accuracy);
        }
        out
    }
}

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> [u64; NUM_CLASSES] {
        self.counts.map(|r| r.iter().sum())
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.counts.iter().flatten().map(|&c| c as f64).collect();
        Tensor::new(&[NUM_CLASSES, NUM_CLASSES], data).expect("6x6 shape")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for j in 0..NUM_CLASSES {
            out += &format!(",{j}");
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out += &i.to_string();
            for c in row {
                out += &format!(",{c}");
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.counts {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>5}")).collect();
            writeln!(f, "{}", cells.join(""))?;
        }
        Ok(())
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_classes(config: &ModelConfig) -> Result<()> {
    if config.num_classes != NUM_CLASSES {
        return Err(Error::Config(format!(
            "the harness works on {NUM_CLASSES} expression classes, config has {}",
            config.num_classes
        )));
    }
    Ok(())
}

fn check_size(config: &ModelConfig, data: &Dataset) -> Result<()> {
    if data.size != config.input_size {
        return Err(Error::Data(format!(
            "dataset images are {0}x{0}, config expects {1}",
            data.size, config.input_size
        )));
    }
    Ok(())
}

/// Splits a shuffled order into batches; a trailing batch of one sample is
/// folded into its predecessor because batch statistics need two samples.
pub fn batches(order: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let tail = out.pop().unwrap();
        out.last_mut().unwrap().extend(tail);
    }
    out
}

/// Trains on every item of `data`.
pub fn train(model: &ModelConfig, tc: &TrainConfig, data: &Dataset) -> Result<(ParamStore, RunLog)> {
    let all: Vec<usize> = (0..data.len()).collect();
    train_on(model, tc, data, &all)
}

/// Trains a freshly initialized network on `data.items[indices]`.
pub fn train_on(
    model: &ModelConfig,
    tc: &TrainConfig,
    data: &Dataset,
    indices: &[usize],
) -> Result<(ParamStore, RunLog)> {
    tc.validate()?;
    check_classes(model)?;
    check_size(model, data)?;
    if indices.len() < 2 {
        return Err(Error::Data(format!("training needs at least 2 samples, got {}", indices.len())));
    }
    let needs = Needs::of(model);
    for &i in indices {
        let it = &data.items[i];
        if (needs.texture && it.texture.is_none()) || (needs.depth && it.depth.is_none()) {
            return Err(Error::Data(format!("item {} lacks a modality the config needs", it.name)));
        }
        if needs.masks && (it.mask1.is_none() || it.mask2.is_none()) {
            return Err(Error::Data(format!("item {} has no masks but mask attention is on", it.name)));
        }
    }

    let start = Instant::now();
    let net = AfNet::new(model.clone())?;
    let mut params = net.init_params()?;
    let mut adam = AdamState::new(tc.learning_rate, tc.beta1, tc.beta2)?;
    let mut epochs = Vec::with_capacity(tc.epochs);
    let mut order = indices.to_vec();

    for epoch in 0..tc.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_from_seed(derive_seed_idx(tc.seed, "epoch", epoch as u64)));
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in batches(&order, tc.batch_size) {
            let (input, labels) = data.batch(&batch, needs)?;
            let mut tape = Tape::new();
            let logits = net.forward(&mut Ctx::new(&mut tape, &mut params, true), &input)?;
            let loss = tape.softmax_cross_entropy(logits, &labels)?;
            loss_sum += tape.value(loss).data()[0] * batch.len() as f64;
            correct += count_correct(tape.value(logits), &labels);
            tape.backward(loss)?;
            params.absorb_grads(&tape)?;
            adam_step(&mut params, &mut adam)?;
        }
        let n = order.len() as f64;
        epochs.push(EpochLog { loss: loss_sum / n, accuracy: correct as f64 / n });
    }

    let log = RunLog {
        epochs,
        final_accuracy: None,
        wall_time_s: start.elapsed().as_secs_f64(),
        config_echo: echo(model, tc),
    };
    Ok((params, log))
}

pub fn echo(model: &ModelConfig, tc: &TrainConfig) -> String {
    let train: Vec<String> = tc.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{};{}", model.echo(), train.join(";"))
}

fn count_correct(logits: &Tensor, labels: &[usize]) -> usize {
    let c = logits.shape()[1];
    logits.data().chunks(c).zip(labels).filter(|(row, &y)| argmax(row) == y).count()
}

/// Per-sample predictions in inference mode.
pub fn predict(
    params: &mut ParamStore,
    model: &ModelConfig,
    data: &Dataset,
    indices: &[usize],
) -> Result<Vec<usize>> {
    check_size(model, data)?;
    let net = AfNet::new(model.clone())?;
    let needs = Needs::of(model);
    let mut out = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (input, _) = data.batch(chunk, needs)?;
        let mut tape = Tape::new();
        let logits = net.forward(&mut Ctx::new(&mut tape, params, false), &input)?;
        let v = tape.value(logits);
        out.extend(v.data().chunks(v.shape()[1]).map(argmax));
    }
    Ok(out)
}

pub fn evaluate(params: &ParamStore, model: &ModelConfig, data: &Dataset) -> Result<(f64, ConfusionMatrix)> {
    let all: Vec<usize> = (0..data.len()).collect();
    evaluate_on(params, model, data, &all)
}

/// Accuracy and confusion matrix over `data.items[indices]`.
pub fn evaluate_on(
    params: &ParamStore,
    model: &ModelConfig,
    data: &Dataset,
    indices: &[usize],
) -> Result<(f64, ConfusionMatrix)> {
    check_classes(model)?;
    if indices.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    // Inference mode never touches the running statistics, but `Ctx` wants
    // a mutable store.
    let mut params = params.clone();
    let preds = predict(&mut params, model, data, indices)?;
    let mut cm = ConfusionMatrix::default();
    for (&i, p) in indices.iter().zip(preds) {
        cm.record(data.items[i].label, p);
    }
    Ok((cm.accuracy(), cm))
}
