//! Tape-based reverse-mode differentiation.
//!
//! Every operation evaluates eagerly and appends a node holding its output
//! and whatever the backward rule needs. Node indices are handed out in
//! creation order, so the tape is always topologically sorted and a single
//! reverse sweep visits each entry exactly once.

mod broadcast;
pub(crate) mod conv;
mod norm;
mod pool;

use std::collections::HashMap;

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

use broadcast::BroadcastMap;
use conv::ConvGeom;
pub use norm::{BnStats, BN_EPS, BN_MOMENTUM};
use pool::PoolGeom;
pub use pool::PoolMode;

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Elementwise {
    Add,
    Mul,
}

enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    Pool2d {
        x: Var,
        geom: PoolGeom,
        mode: PoolMode,
        argmax: Vec<usize>,
    },
    GlobalPool {
        x: Var,
        dims: [usize; 4],
        mode: PoolMode,
        argmax: Vec<usize>,
    },
    Relu(Var),
    Sigmoid(Var),
    Binary {
        a: Var,
        b: Var,
        kind: Elementwise,
        map: BroadcastMap,
    },
    Scale(Var, f64),
    Expand(Var, BroadcastMap),
    Reshape(Var),
    /// Concatenation along axis 1; `blocks[i]` is the per-sample length of part `i`.
    Concat {
        parts: Vec<Var>,
        blocks: Vec<usize>,
        n: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
        n: usize,
        d: usize,
        k: usize,
    },
    BatchNorm {
        x: Var,
        scale: Var,
        shift: Var,
        dims: [usize; 4],
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        training: bool,
    },
    SoftmaxCe {
        logits: Var,
        probs: Vec<f64>,
        labels: Vec<usize>,
        classes: usize,
    },
    DecisionAverage {
        a: Var,
        b: Var,
        probs_a: Vec<f64>,
        share_a: Vec<f64>,
        probs_b: Vec<f64>,
        share_b: Vec<f64>,
        classes: usize,
    },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recording of one forward evaluation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
    param_index: HashMap<String, Var>,
    marks: HashMap<String, Var>,
}

fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(logits.len());
    for row in logits.chunks(classes) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|z| (z - m).exp()).collect();
        let s: f64 = e.iter().sum();
        p.extend(e.into_iter().map(|v| v / s));
    }
    p
}

fn log_softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(classes) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|z| z - lse));
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn any_needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.needs(v))
    }

    /// Records a leaf; it is differentiable iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let needs = t.requires_grad();
        self.push(t, Op::Leaf, needs)
    }

    /// Records a non-differentiable input.
    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.set_requires_grad(false);
        self.push(t, Op::Leaf, false)
    }

    /// Records a named trainable parameter. Repeated calls with the same name
    /// return the same node.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Var {
        if let Some(&v) = self.param_index.get(name) {
            return v;
        }
        let mut t = t.clone();
        t.clear_grad();
        t.set_requires_grad(true);
        let v = self.push(t, Op::Leaf, true);
        self.params.push((name.to_string(), v));
        self.param_index.insert(name.to_string(), v);
        v
    }

    /// Parameters in the order they were first bound.
    pub fn params(&self) -> impl Iterator<Item = (&str, Var)> {
        self.params.iter().map(|(n, v)| (n.as_str(), *v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` target with respect to `v`, if `v` was
    /// reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    /// Names an intermediate value so it can be looked up after the pass.
    pub fn mark(&mut self, name: &str, v: Var) {
        self.marks.insert(name.to_string(), v);
    }

    pub fn marked(&self, name: &str) -> Result<Var> {
        self.marks
            .get(name)
            .copied()
            .ok_or_else(|| Error::Lookup(name.to_string()))
    }

    pub fn marks(&self) -> impl Iterator<Item = (&str, Var)> {
        self.marks.iter().map(|(n, v)| (n.as_str(), *v))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let xd = self.value(x).dims4()?;
        let wd = self.value(w).dims4()?;
        let geom = ConvGeom::new(xd, wd, stride, pad)?;
        if self.value(b).shape() != [geom.cout] {
            return shape_err(format!(
                "conv2d: bias shape {:?}, expected [{}]",
                self.value(b).shape(),
                geom.cout
            ));
        }
        let out = conv::forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            &geom,
        );
        let t = Tensor::new(&geom.out_shape(), out)?;
        let needs = self.any_needs(&[x, w, b]);
        Ok(self.push(t, Op::Conv2d { x, w, b, geom }, needs))
    }

    pub fn pool2d(
        &mut self,
        x: Var,
        mode: PoolMode,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let geom = PoolGeom::new(self.value(x).dims4()?, kh, kw, stride, pad)?;
        let (out, argmax) = pool::forward(self.value(x).data(), &geom, mode);
        let t = Tensor::new(&geom.out_shape(), out)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Pool2d { x, geom, mode, argmax }, needs))
    }

    pub fn global_pool(&mut self, x: Var, mode: PoolMode) -> Result<Var> {
        let dims = self.value(x).dims4()?;
        let (out, argmax) = pool::global_forward(self.value(x).data(), dims, mode);
        let t = Tensor::new(&[dims[0], dims[1], 1, 1], out)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::GlobalPool { x, dims, mode, argmax }, needs))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let src = self.value(x);
        let data: Vec<f64> = match kind {
            Activation::Relu => src.data().iter().map(|&v| v.max(0.0)).collect(),
            Activation::Sigmoid => src.data().iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
        };
        let t = Tensor::new(src.shape(), data).expect("same shape");
        let needs = self.needs(x);
        let op = match kind {
            Activation::Relu => Op::Relu(x),
            Activation::Sigmoid => Op::Sigmoid(x),
        };
        self.push(t, op, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    /// `a ∘ b` where `b` is broadcast into the shape of `a`.
    pub fn elementwise(&mut self, a: Var, b: Var, kind: Elementwise) -> Result<Var> {
        let map = BroadcastMap::new(self.value(a).shape(), self.value(b).shape())?;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let data: Vec<f64> = match kind {
            Elementwise::Add => av.iter().enumerate().map(|(i, x)| x + bv[map.get(i)]).collect(),
            Elementwise::Mul => av.iter().enumerate().map(|(i, x)| x * bv[map.get(i)]).collect(),
        };
        let t = Tensor::new(self.value(a).shape(), data)?;
        let needs = self.any_needs(&[a, b]);
        Ok(self.push(t, Op::Binary { a, b, kind, map }, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Elementwise::Add)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, Elementwise::Mul)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let src = self.value(x);
        let t = Tensor::new(src.shape(), src.data().iter().map(|v| v * factor).collect())
            .expect("same shape");
        let needs = self.needs(x);
        self.push(t, Op::Scale(x, factor), needs)
    }

    /// Broadcasts `x` into `shape` (replicating along size-1 axes).
    pub fn expand(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let map = BroadcastMap::new(shape, self.value(x).shape())?;
        let src = self.value(x).data();
        let n: usize = shape.iter().product();
        let t = Tensor::new(shape, (0..n).map(|i| src[map.get(i)]).collect())?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Expand(x, map), needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let mut t = self.value(x).clone().reshape(shape)?;
        t.clear_grad();
        let needs = self.needs(x);
        Ok(self.push(t, Op::Reshape(x), needs))
    }

    /// Concatenates along axis 1. All parts must agree on axis 0 and on
    /// every axis after 1.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self
            .value(*parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?)
            .shape()
            .to_vec();
        if first.len() < 2 {
            return shape_err("concat needs rank >= 2");
        }
        let n = first[0];
        let mut width = 0;
        let mut blocks = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != first.len() || s[0] != n || s[2..] != first[2..] {
                return shape_err(format!("concat: {s:?} incompatible with {first:?}"));
            }
            width += s[1];
            blocks.push(self.value(p).numel() / n);
        }
        let mut data = Vec::with_capacity(blocks.iter().sum::<usize>() * n);
        for i in 0..n {
            for (&p, &blk) in parts.iter().zip(&blocks) {
                data.extend_from_slice(&self.value(p).data()[i * blk..(i + 1) * blk]);
            }
        }
        let mut shape = first.clone();
        shape[1] = width;
        let t = Tensor::new(&shape, data)?;
        let needs = self.any_needs(parts);
        Ok(self.push(
            t,
            Op::Concat {
                parts: parts.to_vec(),
                blocks,
                n,
            },
            needs,
        ))
    }

    /// `x[N,D] · w[D,K] + b[K]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let [n, d] = self.value(x).dims2()?;
        let [wd, k] = self.value(w).dims2()?;
        if d != wd {
            return shape_err(format!("linear: input width {d} vs weight rows {wd}"));
        }
        if self.value(b).shape() != [k] {
            return shape_err(format!("linear: bias shape {:?}, expected [{k}]", self.value(b).shape()));
        }
        let (xv, wv, bv) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = Vec::with_capacity(n * k);
        for i in 0..n {
            let mut row = bv.to_vec();
            for j in 0..d {
                conv::axpy(xv[i * d + j], &wv[j * k..(j + 1) * k], &mut row);
            }
            out.extend(row);
        }
        let t = Tensor::new(&[n, k], out)?;
        let needs = self.any_needs(&[x, w, b]);
        Ok(self.push(t, Op::Linear { x, w, b, n, d, k }, needs))
    }

    /// Batch normalization. In training mode the batch statistics are used
    /// and `stats` is updated; otherwise `stats` is read only.
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        scale: Var,
        shift: Var,
        stats: &mut BnStats,
        training: bool,
    ) -> Result<Var> {
        let dims = self.value(x).dims4()?;
        let c = dims[1];
        if self.value(scale).shape() != [c] || self.value(shift).shape() != [c] {
            return shape_err(format!("batchnorm2d: affine params must be [{c}]"));
        }
        if stats.mean.len() != c || stats.var.len() != c {
            return shape_err(format!("batchnorm2d: running stats must have {c} channels"));
        }
        if training && dims[0] * dims[2] * dims[3] < 2 {
            return Err(Error::Contract(
                "batchnorm2d needs at least two values per channel in training mode".into(),
            ));
        }
        let f = norm::forward(
            self.value(x).data(),
            dims,
            self.value(scale).data(),
            self.value(shift).data(),
            stats,
            training,
        );
        let t = Tensor::new(&dims, f.out)?;
        let needs = self.any_needs(&[x, scale, shift]);
        Ok(self.push(
            t,
            Op::BatchNorm {
                x,
                scale,
                shift,
                dims,
                xhat: f.xhat,
                inv_std: f.inv_std,
                training,
            },
            needs,
        ))
    }

    /// Mean cross-entropy of `softmax(logits)` against `labels`, as a `[1]`
    /// tensor.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let [n, classes] = self.value(logits).dims2()?;
        if labels.len() != n {
            return shape_err(format!("{} labels for a batch of {n}", labels.len()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Label { label, classes });
        }
        let z = self.value(logits).data();
        let logp = log_softmax_rows(z, classes);
        let loss = -labels
            .iter()
            .enumerate()
            .map(|(i, &l)| logp[i * classes + l])
            .sum::<f64>()
            / n as f64;
        let probs = softmax_rows(z, classes);
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCe {
                logits,
                probs,
                labels: labels.to_vec(),
                classes,
            },
            needs,
        ))
    }

    /// Cached class probabilities of a `softmax_cross_entropy` node.
    pub fn probabilities(&self, loss: Var) -> Option<&[f64]> {
        match &self.nodes[loss.0].op {
            Op::SoftmaxCe { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Logits whose softmax is the arithmetic mean of `softmax(a)` and
    /// `softmax(b)`: `log((softmax(a) + softmax(b)) / 2)`.
    pub fn decision_average(&mut self, a: Var, b: Var) -> Result<Var> {
        let [n, classes] = self.value(a).dims2()?;
        if self.value(b).shape() != [n, classes] {
            return shape_err("decision_average: operands must share shape");
        }
        let la = log_softmax_rows(self.value(a).data(), classes);
        let lb = log_softmax_rows(self.value(b).data(), classes);
        let mut out = Vec::with_capacity(la.len());
        let mut share_a = Vec::with_capacity(la.len());
        let mut share_b = Vec::with_capacity(la.len());
        for (&x, &y) in la.iter().zip(&lb) {
            let m = x.max(y);
            let o = m + (0.5 * (x - m).exp() + 0.5 * (y - m).exp()).ln();
            out.push(o);
            share_a.push(0.5 * (x - o).exp());
            share_b.push(0.5 * (y - o).exp());
        }
        let probs_a = la.iter().map(|v| v.exp()).collect();
        let probs_b = lb.iter().map(|v| v.exp()).collect();
        let t = Tensor::new(&[n, classes], out)?;
        let needs = self.any_needs(&[a, b]);
        Ok(self.push(
            t,
            Op::DecisionAverage {
                a,
                b,
                probs_a,
                share_a,
                probs_b,
                share_b,
                classes,
            },
            needs,
        ))
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), needs)
    }

    /// Reverse sweep from the scalar `loss`. Afterwards every reachable node
    /// that requires a gradient carries it; unreachable ones stay unset.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        for node in &mut self.nodes {
            node.value.clear_grad();
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            for (v, contrib) in self.local_grads(i, &g) {
                if !self.needs(v) {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => {
                        for (a, c) in acc.iter_mut().zip(&contrib) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            }
            self.nodes[i].value.set_grad(g)?;
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let val = |v: Var| self.nodes[v.0].value.data();
        let out = self.nodes[i].value.data();
        match &self.nodes[i].op {
            Op::Leaf => Vec::new(),
            Op::Conv2d { x, w, b, geom } => {
                let grads = conv::backward(
                    val(*x),
                    val(*w),
                    g,
                    geom,
                    (self.needs(*x), self.needs(*w), self.needs(*b)),
                );
                let mut r = Vec::new();
                if let Some(dx) = grads.dx {
                    r.push((*x, dx));
                }
                if let Some(dw) = grads.dw {
                    r.push((*w, dw));
                }
                if let Some(db) = grads.db {
                    r.push((*b, db));
                }
                r
            }
            Op::Pool2d { x, geom, mode, argmax } => {
                vec![(*x, pool::backward(g, geom, *mode, argmax, val(*x).len()))]
            }
            Op::GlobalPool { x, dims, mode, argmax } => {
                vec![(*x, pool::global_backward(g, *dims, *mode, argmax))]
            }
            Op::Relu(x) => {
                let xv = val(*x);
                vec![(*x, g.iter().zip(xv).map(|(d, &v)| if v > 0.0 { *d } else { 0.0 }).collect())]
            }
            Op::Sigmoid(x) => {
                vec![(*x, g.iter().zip(out).map(|(d, s)| d * s * (1.0 - s)).collect())]
            }
            Op::Binary { a, b, kind, map } => {
                let (av, bv) = (val(*a), val(*b));
                match kind {
                    Elementwise::Add => vec![(*a, g.to_vec()), (*b, map.reduce(g.iter().copied()))],
                    Elementwise::Mul => {
                        let da = g.iter().enumerate().map(|(j, d)| d * bv[map.get(j)]).collect();
                        let db = map.reduce(g.iter().zip(av).map(|(d, x)| d * x));
                        vec![(*a, da), (*b, db)]
                    }
                }
            }
            Op::Scale(x, f) => vec![(*x, g.iter().map(|d| d * f).collect())],
            Op::Expand(x, map) => vec![(*x, map.reduce(g.iter().copied()))],
            Op::Reshape(x) => vec![(*x, g.to_vec())],
            Op::Concat { parts, blocks, n } => {
                let total: usize = blocks.iter().sum();
                let mut offset = 0;
                let mut r = Vec::with_capacity(parts.len());
                for (&p, &blk) in parts.iter().zip(blocks) {
                    let mut d = Vec::with_capacity(blk * n);
                    for s in 0..*n {
                        d.extend_from_slice(&g[s * total + offset..s * total + offset + blk]);
                    }
                    offset += blk;
                    r.push((p, d));
                }
                r
            }
            Op::Linear { x, w, b, n, d, k } => {
                let (n, d, k) = (*n, *d, *k);
                let (xv, wv) = (val(*x), val(*w));
                let mut r = Vec::new();
                if self.needs(*x) {
                    let mut dx = vec![0.0; n * d];
                    for i in 0..n {
                        for j in 0..d {
                            dx[i * d + j] = conv::dot(&g[i * k..(i + 1) * k], &wv[j * k..(j + 1) * k]);
                        }
                    }
                    r.push((*x, dx));
                }
                if self.needs(*w) {
                    let mut dw = vec![0.0; d * k];
                    for i in 0..n {
                        for j in 0..d {
                            conv::axpy(xv[i * d + j], &g[i * k..(i + 1) * k], &mut dw[j * k..(j + 1) * k]);
                        }
                    }
                    r.push((*w, dw));
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; k];
                    for row in g.chunks(k) {
                        for (a, v) in db.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    r.push((*b, db));
                }
                r
            }
            Op::BatchNorm {
                x,
                scale,
                shift,
                dims,
                xhat,
                inv_std,
                training,
            } => {
                let bg = norm::backward(g, *dims, val(*scale), xhat, inv_std, *training);
                vec![(*x, bg.dx), (*scale, bg.dscale), (*shift, bg.dshift)]
            }
            Op::SoftmaxCe {
                logits,
                probs,
                labels,
                classes,
            } => {
                let n = labels.len() as f64;
                let mut d: Vec<f64> = probs.iter().map(|p| p * g[0] / n).collect();
                for (i, &l) in labels.iter().enumerate() {
                    d[i * classes + l] -= g[0] / n;
                }
                vec![(*logits, d)]
            }
            Op::DecisionAverage {
                a,
                b,
                probs_a,
                share_a,
                probs_b,
                share_b,
                classes,
            } => {
                // d out_k / d a_j = share_a_k (delta_kj - pa_j), likewise for b
                let c = *classes;
                let mut da = vec![0.0; g.len()];
                let mut db = vec![0.0; g.len()];
                for row in 0..g.len() / c {
                    let r = row * c..(row + 1) * c;
                    let gr = &g[r.clone()];
                    let (sa, sb) = (&share_a[r.clone()], &share_b[r]);
                    let ta: f64 = gr.iter().zip(sa).map(|(x, s)| x * s).sum();
                    let tb: f64 = gr.iter().zip(sb).map(|(x, s)| x * s).sum();
                    for j in 0..c {
                        da[row * c + j] = gr[j] * sa[j] - probs_a[row * c + j] * ta;
                        db[row * c + j] = gr[j] * sb[j] - probs_b[row * c + j] * tb;
                    }
                }
                vec![(*a, da), (*b, db)]
            }
            Op::Sum(x) => vec![(*x, vec![g[0]; val(*x).len()])],
        }
    }
}
