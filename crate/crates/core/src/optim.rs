//! Adam with bias correction.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::params::ParamStore;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Number of steps taken so far.
    pub t: u64,
    moments: IndexMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64) -> Result<Self> {
        if !(learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning rate {learning_rate} must be >= 0")));
        }
        for b in [beta1, beta2] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("beta {b} outside (0, 1)")));
            }
        }
        Ok(Self {
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
            t: 0,
            moments: IndexMap::new(),
        })
    }

    /// First and second moment estimates for `name`, once it has been stepped.
    pub fn moments(&self, name: &str) -> Option<(&[f64], &[f64])> {
        self.moments.get(name).map(|(m, v)| (m.as_slice(), v.as_slice()))
    }
}

/// One Adam update over every tensor in `params`. Each tensor must carry a
/// gradient.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    if let Some((name, _)) = params.iter().find(|(_, t)| t.grad().is_none()) {
        return Err(Error::Contract(format!("parameter `{name}` has no gradient")));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for (name, p) in params.iter_mut() {
        let n = p.numel();
        let (m, v) = state
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
        let g = p.grad().expect("checked above").to_vec();
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            *w -= state.learning_rate * mhat / (vhat.sqrt() + state.epsilon);
        }
    }
    Ok(())
}
