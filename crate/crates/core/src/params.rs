//! Named parameter storage shared by the model, the optimizer and checkpoints.

use indexmap::IndexMap;

use crate::autodiff::{BnStats, Tape};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Trainable tensors plus batch-norm running statistics, both keyed by
/// dotted component paths such as `texture.layer1.0.conv1.w`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: IndexMap<String, Tensor>,
    bn: IndexMap<String, BnStats>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t.requiring_grad());
    }

    pub fn insert_bn(&mut self, name: impl Into<String>, stats: BnStats) {
        self.bn.insert(name.into(), stats);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Lookup(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Lookup(name.to_string()))
    }

    pub fn bn(&self, name: &str) -> Result<&BnStats> {
        self.bn.get(name).ok_or_else(|| Error::Lookup(name.to_string()))
    }

    pub fn bn_mut(&mut self, name: &str) -> Result<&mut BnStats> {
        self.bn
            .get_mut(name)
            .ok_or_else(|| Error::Lookup(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn bn_iter(&self) -> impl Iterator<Item = (&str, &BnStats)> {
        self.bn.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn clear_grads(&mut self) {
        for t in self.tensors.values_mut() {
            t.clear_grad();
        }
    }

    /// Copies gradients of every parameter bound on `tape` into the store.
    /// Parameters the tape never saw keep no gradient.
    pub fn absorb_grads(&mut self, tape: &Tape) -> Result<()> {
        self.clear_grads();
        for (name, var) in tape.params() {
            let Some(g) = tape.grad(var) else { continue };
            self.get_mut(name)?.set_grad(g.to_vec())?;
        }
        Ok(())
    }
}
