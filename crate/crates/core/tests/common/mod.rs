//! Test-only reference implementations. Nothing here calls into the kernels
//! it is used to check.

#![allow(dead_code)]

use afnet::autodiff::PoolMode;
use afnet::{Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Six nested loops (plus the two batch/channel ones) over the definition of
/// zero-padded cross-correlation.
pub fn naive_conv2d(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
    let [n, cin, h, wd] = x.dims4().unwrap();
    let [cout, _, kh, kw] = w.dims4().unwrap();
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * cout * ho * wo];
    for s in 0..n {
        for o in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b.data()[o];
                    for c in 0..cin {
                        for i in 0..kh {
                            for j in 0..kw {
                                let iy = (oy * stride + i) as isize - pad as isize;
                                let ix = (ox * stride + j) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[((s * cin + c) * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((o * cin + c) * kh + i) * kw + j];
                            }
                        }
                    }
                    out[((s * cout + o) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    Tensor::new(&[n, cout, ho, wo], out).unwrap()
}

pub fn naive_pool(x: &Tensor, mode: PoolMode, kh: usize, kw: usize, stride: usize) -> Tensor {
    let [n, c, h, w] = x.dims4().unwrap();
    let ho = (h - kh) / stride + 1;
    let wo = (w - kw) / stride + 1;
    let mut out = Vec::new();
    for p in 0..n * c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut vals = Vec::new();
                for i in 0..kh {
                    for j in 0..kw {
                        vals.push(x.data()[p * h * w + (oy * stride + i) * w + ox * stride + j]);
                    }
                }
                out.push(match mode {
                    PoolMode::Max => vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    PoolMode::Avg => vals.iter().sum::<f64>() / vals.len() as f64,
                });
            }
        }
    }
    Tensor::new(&[n, c, ho, wo], out).unwrap()
}

pub fn naive_linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let [n, d] = x.dims2().unwrap();
    let [_, k] = w.dims2().unwrap();
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        for j in 0..k {
            let mut acc = b.data()[j];
            for l in 0..d {
                acc += x.data()[i * d + l] * w.data()[l * k + j];
            }
            out[i * k + j] = acc;
        }
    }
    Tensor::new(&[n, k], out).unwrap()
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps gradients that are
/// zero up to rounding from producing meaningless ratios.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const REL_FLOOR: f64 = 1e-6;

/// Floor for whole-module parameter checks, where many summed terms raise
/// the round-off of each difference quotient.
pub const PARAM_REL_FLOOR: f64 = 1e-5;

/// Evaluates `build` on leaves created from `inputs`, reduces the output
/// with a fixed random projection, and compares reverse-mode gradients of
/// every input element against central differences. Returns the worst
/// relative error and the number of scalars checked.
pub fn grad_check(
    inputs: &[Tensor],
    differentiable: &[bool],
    eps: f64,
    proj_seed: u64,
    build: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
) -> (f64, usize) {
    let eval = |vals: &[Tensor], record: bool| -> (f64, Vec<Option<Vec<f64>>>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals
            .iter()
            .zip(differentiable)
            .map(|(t, &d)| {
                if d && record {
                    tape.leaf(t.clone().requiring_grad())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        let out = build(&mut tape, &vars).unwrap();
        let loss = if tape.value(out).numel() == 1 {
            out
        } else {
            let shape = tape.value(out).shape().to_vec();
            let proj = rand_tensor(&mut rng(proj_seed), &shape);
            let p = tape.constant(proj);
            let m = tape.mul(out, p).unwrap();
            tape.sum(m)
        };
        let value = tape.value(loss).data()[0];
        if record {
            tape.backward(loss).unwrap();
        }
        let grads = vars.iter().map(|&v| tape.grad(v).map(<[f64]>::to_vec)).collect();
        (value, grads)
    };
    let (_, analytic) = eval(inputs, true);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (k, input) in inputs.iter().enumerate() {
        if !differentiable[k] {
            continue;
        }
        let a = analytic[k].clone().unwrap_or_else(|| vec![0.0; input.numel()]);
        for i in 0..input.numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += eps;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= eps;
            let numeric = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * eps);
            worst = worst.max(rel_err(a[i], numeric, REL_FLOOR));
            checked += 1;
        }
    }
    (worst, checked)
}

/// Central-difference check of every parameter gradient in `names` for the
/// scalar produced by `build`. The store is perturbed in place and restored.
/// Returns the worst relative error, the number checked, and the name of
/// the worst entry.
pub fn param_grad_check(
    params: &mut afnet::ParamStore,
    names: &[(String, usize)],
    eps: f64,
    build: impl Fn(&mut Tape, &mut afnet::ParamStore) -> Result<Var>,
) -> (f64, usize, String) {
    let mut tape = Tape::new();
    let loss = build(&mut tape, params).unwrap();
    tape.backward(loss).unwrap();
    params.absorb_grads(&tape).unwrap();
    // Exact zeros (a bias feeding batchnorm) leave only round-off in the
    // difference quotient, around 1e-10 for these graph sizes.
    let floor = PARAM_REL_FLOOR * tape.value(loss).data()[0].abs().max(1.0);
    let eval = |params: &mut afnet::ParamStore| -> f64 {
        let mut tape = Tape::new();
        let v = build(&mut tape, params).unwrap();
        tape.value(v).data()[0]
    };
    let mut worst: f64 = 0.0;
    let mut worst_name = String::new();
    for (name, i) in names {
        let analytic = params.get(name).unwrap().grad().map_or(0.0, |g| g[*i]);
        let orig = params.get(name).unwrap().data()[*i];
        params.get_mut(name).unwrap().data_mut()[*i] = orig + eps;
        let up = eval(params);
        params.get_mut(name).unwrap().data_mut()[*i] = orig - eps;
        let down = eval(params);
        params.get_mut(name).unwrap().data_mut()[*i] = orig;
        let e = rel_err(analytic, (up - down) / (2.0 * eps), floor);
        if e > worst {
            worst = e;
            worst_name = format!("{name}[{i}]");
        }
    }
    (worst, names.len(), worst_name)
}

/// Every `(parameter, element)` pair of the store.
pub fn all_param_entries(params: &afnet::ParamStore) -> Vec<(String, usize)> {
    params
        .iter()
        .flat_map(|(n, t)| (0..t.numel()).map(move |i| (n.to_string(), i)))
        .collect()
}
