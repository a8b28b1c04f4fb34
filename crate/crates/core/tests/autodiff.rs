mod common;

use afnet::autodiff::{Activation, BnStats, Elementwise, PoolMode};
use afnet::{Error, Tape, Tensor};
use common::*;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape, data.to_vec()).unwrap()
}

#[test]
fn conv_1x1_is_per_element_affine() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let w = tape.constant(t(&[1, 1, 1, 1], &[2.0]));
    let b = tape.constant(t(&[1], &[1.0]));
    let y = tape.conv2d(x, w, b, 1, 0).unwrap();
    assert_eq!(tape.value(y).data(), &[3.0, 5.0, 7.0, 9.0]);
}

#[test]
fn conv_identity_kernel_reproduces_input() {
    let mut r = rng(1);
    let input = rand_tensor(&mut r, &[2, 1, 5, 4]);
    let mut k = vec![0.0; 9];
    k[4] = 1.0;
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let w = tape.constant(t(&[1, 1, 3, 3], &k));
    let b = tape.constant(t(&[1], &[0.0]));
    let y = tape.conv2d(x, w, b, 1, 1).unwrap();
    assert_eq!(tape.value(y).data(), input.data());
}

#[test]
fn conv_matches_naive_loops() {
    let mut r = rng(2);
    let x = rand_tensor(&mut r, &[2, 3, 5, 5]);
    let w = rand_tensor(&mut r, &[4, 3, 3, 3]);
    let b = rand_tensor(&mut r, &[4]);
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
    let y = tape.conv2d(xv, wv, bv, 2, 1).unwrap();
    let expect = naive_conv2d(&x, &w, &b, 2, 1);
    assert_eq!(tape.value(y).shape(), &[2, 4, 3, 3]);
    assert!(tape.value(y).max_abs_diff(&expect) < 1e-10);
}

#[test]
fn conv_channel_mismatch_is_shape_error() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros(&[1, 2, 4, 4]).unwrap());
    let w = tape.constant(Tensor::zeros(&[1, 3, 3, 3]).unwrap());
    let b = tape.constant(Tensor::zeros(&[1]).unwrap());
    assert!(matches!(tape.conv2d(x, w, b, 1, 1), Err(Error::Shape(_))));
    let w = tape.constant(Tensor::zeros(&[1, 2, 7, 7]).unwrap());
    assert!(matches!(tape.conv2d(x, w, b, 1, 1), Err(Error::Shape(_))));
}

#[test]
fn pool_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let m = tape.pool2d(x, PoolMode::Max, 2, 2, 2, 0).unwrap();
    let a = tape.pool2d(x, PoolMode::Avg, 2, 2, 2, 0).unwrap();
    assert_eq!(tape.value(m).data(), &[4.0]);
    assert_eq!(tape.value(a).data(), &[2.5]);
    assert!(matches!(tape.pool2d(x, PoolMode::Max, 3, 3, 1, 0), Err(Error::Shape(_))));
}

#[test]
fn max_pool_ties_route_to_first_maximum() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[1, 1, 2, 2], &[5.0, 5.0, 5.0, 5.0]).requiring_grad());
    let m = tape.pool2d(x, PoolMode::Max, 2, 2, 2, 0).unwrap();
    let s = tape.sum(m);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn padded_max_pool_ignores_padding() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[1, 1, 2, 2], &[-1.0, -2.0, -3.0, -4.0]));
    let m = tape.pool2d(x, PoolMode::Max, 3, 3, 2, 1).unwrap();
    assert_eq!(tape.value(m).data(), &[-1.0]);
}

#[test]
fn global_pool_examples() {
    let mut tape = Tape::new();
    let c = tape.constant(Tensor::full(&[1, 2, 3, 3], 0.25).unwrap());
    for mode in [PoolMode::Max, PoolMode::Avg] {
        let g = tape.global_pool(c, mode).unwrap();
        assert_eq!(tape.value(g).data(), &[0.25, 0.25]);
    }
    let x = tape.constant(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let avg = tape.global_pool(x, PoolMode::Avg).unwrap();
    let max = tape.global_pool(x, PoolMode::Max).unwrap();
    assert_eq!(tape.value(avg).data(), &[2.5]);
    assert_eq!(tape.value(max).data(), &[4.0]);
    assert_eq!(tape.value(max).shape(), &[1, 1, 1, 1]);
}

#[test]
fn global_pool_equals_full_window_pool() {
    let mut r = rng(3);
    for _ in 0..10 {
        let x = rand_tensor(&mut r, &[2, 3, 4, 5]);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        for mode in [PoolMode::Max, PoolMode::Avg] {
            let g = tape.global_pool(xv, mode).unwrap();
            let p = tape.pool2d(xv, mode, 4, 5, 1, 0).unwrap();
            assert!(tape.value(g).max_abs_diff(tape.value(p)) < 1e-15);
        }
    }
}

#[test]
fn activation_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[4], &[0.0, -3.0, 3.0, 700.0]));
    let s = tape.activation(x, Activation::Sigmoid);
    let r = tape.activation(x, Activation::Relu);
    assert_eq!(tape.value(s).data()[0], 0.5);
    assert_eq!(tape.value(r).data(), &[0.0, 0.0, 3.0, 700.0]);
    let y = tape.constant(t(&[3], &[-30.0, 0.1, 30.0]));
    let s = tape.sigmoid(y);
    assert!(tape.value(s).data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn elementwise_examples() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[3], &[1.0, 2.0, 3.0]));
    let b = tape.constant(t(&[3], &[2.0, 2.0, 2.0]));
    let m = tape.elementwise(a, b, Elementwise::Mul).unwrap();
    assert_eq!(tape.value(m).data(), &[2.0, 4.0, 6.0]);
    let mut r = rng(4);
    let xt = rand_tensor(&mut r, &[2, 3, 2, 2]);
    let x = tape.constant(xt.clone());
    let z = tape.constant(Tensor::zeros(&[2, 3, 2, 2]).unwrap());
    let s = tape.add(x, z).unwrap();
    assert_eq!(tape.value(s).data(), xt.data());
    let bad = tape.constant(Tensor::zeros(&[2, 2, 1, 1]).unwrap());
    assert!(matches!(tape.mul(x, bad), Err(Error::Shape(_))));
}

#[test]
fn channel_broadcast_matches_loop_oracle() {
    let mut r = rng(5);
    let x = rand_tensor(&mut r, &[2, 3, 4, 4]);
    let w = rand_tensor(&mut r, &[2, 3, 1, 1]);
    let mut tape = Tape::new();
    let (xv, wv) = (tape.constant(x.clone()), tape.constant(w.clone()));
    let y = tape.mul(xv, wv).unwrap();
    for n in 0..2 {
        for c in 0..3 {
            for p in 0..16 {
                let i = (n * 3 + c) * 16 + p;
                assert_eq!(tape.value(y).data()[i], x.data()[i] * w.data()[n * 3 + c]);
            }
        }
    }
}

#[test]
fn broadcast_gradient_sums_over_broadcast_axes() {
    let mut r = rng(6);
    let x = rand_tensor(&mut r, &[2, 3, 4, 4]);
    let w = rand_tensor(&mut r, &[2, 3, 1, 1]);
    let up = rand_tensor(&mut r, &[2, 3, 4, 4]);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wv = tape.leaf(w.requiring_grad());
    let y = tape.mul(xv, wv).unwrap();
    let u = tape.constant(up.clone());
    let l = tape.mul(y, u).unwrap();
    let l = tape.sum(l);
    tape.backward(l).unwrap();
    // dL/dy = up, so dL/dw[n,c] = sum over the plane of up * x
    for nc in 0..6 {
        let s: f64 = (0..16).map(|p| up.data()[nc * 16 + p] * x.data()[nc * 16 + p]).sum();
        assert!((tape.grad(wv).unwrap()[nc] - s).abs() < 1e-12);
    }
}

#[test]
fn linear_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[1, 2], &[1.0, 1.0]));
    let w = tape.constant(t(&[2, 1], &[1.0, 1.0]));
    let b = tape.constant(t(&[1], &[0.5]));
    let y = tape.linear(x, w, b).unwrap();
    assert_eq!(tape.value(y).data(), &[2.5]);
    let mut r = rng(7);
    let xt = rand_tensor(&mut r, &[3, 3]);
    let x = tape.constant(xt.clone());
    let eye = tape.constant(t(&[3, 3], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]));
    let zero = tape.constant(Tensor::zeros(&[3]).unwrap());
    let y = tape.linear(x, eye, zero).unwrap();
    assert_eq!(tape.value(y).data(), xt.data());
    let w = tape.constant(Tensor::zeros(&[2, 3]).unwrap());
    assert!(matches!(tape.linear(x, w, zero), Err(Error::Shape(_))));
}

#[test]
fn batchnorm_training_normalizes_and_tracks_stats() {
    let mut r = rng(8);
    let x = rand_tensor(&mut r, &[4, 3, 3, 3]);
    let mut stats = BnStats::new(3);
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let scale = tape.constant(Tensor::full(&[3], 1.0).unwrap());
    let shift = tape.constant(Tensor::zeros(&[3]).unwrap());
    let y = tape.batchnorm2d(xv, scale, shift, &mut stats, true).unwrap();
    let out = tape.value(y).data();
    for c in 0..3 {
        let vals: Vec<f64> = (0..4).flat_map(|n| (0..9).map(move |p| (n * 3 + c) * 9 + p)).map(|i| out[i]).collect();
        let mean = vals.iter().sum::<f64>() / 36.0;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 36.0;
        assert!(mean.abs() < 1e-6);
        // epsilon in the denominator pulls the variance slightly below 1
        assert!((var - 1.0).abs() < 1e-3, "var {var}");
    }
    assert!(stats.mean.iter().all(|m| m.abs() < 0.1));
    assert_ne!(stats.var, vec![1.0; 3]);
}

#[test]
fn batchnorm_constant_channel_gives_shift() {
    let mut stats = BnStats::new(2);
    let mut tape = Tape::new();
    let xv = tape.constant(Tensor::full(&[2, 2, 2, 2], 3.0).unwrap());
    let scale = tape.constant(Tensor::full(&[2], 2.0).unwrap());
    let shift = tape.constant(t(&[2], &[0.5, -1.0]));
    let y = tape.batchnorm2d(xv, scale, shift, &mut stats, true).unwrap();
    let out = tape.value(y).data();
    assert!(out.iter().all(|v| v.is_finite()));
    for n in 0..2 {
        for c in 0..2 {
            for p in 0..4 {
                assert_eq!(out[(n * 2 + c) * 4 + p], [0.5, -1.0][c]);
            }
        }
    }
}

#[test]
fn batchnorm_eval_uses_running_stats() {
    let mut stats = BnStats { mean: vec![1.0], var: vec![4.0 - 1e-5] };
    let mut tape = Tape::new();
    let xv = tape.constant(t(&[1, 1, 1, 2], &[3.0, -1.0]));
    let scale = tape.constant(t(&[1], &[1.0]));
    let shift = tape.constant(t(&[1], &[0.0]));
    let y = tape.batchnorm2d(xv, scale, shift, &mut stats, false).unwrap();
    let out = tape.value(y).data();
    assert!((out[0] - 1.0).abs() < 1e-12 && (out[1] + 1.0).abs() < 1e-12);
    assert_eq!(stats.mean, vec![1.0]);
    let single = tape.constant(t(&[1, 1, 1, 1], &[3.0]));
    assert!(tape.batchnorm2d(single, scale, shift, &mut stats, true).is_err());
}

#[test]
fn softmax_cross_entropy_examples() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::full(&[2, 6], 0.3).unwrap());
    let l = tape.softmax_cross_entropy(z, &[0, 5]).unwrap();
    assert!((tape.value(l).data()[0] - 6f64.ln()).abs() < 1e-12);
    assert!((tape.value(l).data()[0] - 1.7917595).abs() < 1e-7);
    let mut big = vec![0.0; 6];
    big[2] = 1000.0;
    let z = tape.constant(t(&[1, 6], &big));
    let l = tape.softmax_cross_entropy(z, &[2]).unwrap();
    assert!(tape.value(l).data()[0].abs() < 1e-12);
    assert!(matches!(tape.softmax_cross_entropy(z, &[6]), Err(Error::Label { .. })));
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut r = rng(9);
    let mut tape = Tape::new();
    let logits = rand_tensor(&mut r, &[5, 6]);
    let scaled = Tensor::new(&[5, 6], logits.data().iter().map(|v| v * 40.0).collect()).unwrap();
    let z = tape.constant(scaled);
    let l = tape.softmax_cross_entropy(z, &[0, 1, 2, 3, 4]).unwrap();
    for row in tape.probabilities(l).unwrap().chunks(6) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn backward_basic_identities() {
    let mut r = rng(10);
    let xt = rand_tensor(&mut r, &[3, 4]);
    let mut tape = Tape::new();
    let x = tape.leaf(xt.clone().requiring_grad());
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert!(tape.grad(x).unwrap().iter().all(|&g| g == 1.0));

    let mut tape = Tape::new();
    let x = tape.leaf(xt.clone().requiring_grad());
    let sq = tape.mul(x, x).unwrap();
    let s = tape.sum(sq);
    tape.backward(s).unwrap();
    for (g, v) in tape.grad(x).unwrap().iter().zip(xt.data()) {
        assert_eq!(*g, 2.0 * v);
    }
}

#[test]
fn backward_rejects_non_scalar_and_leaves_unreachable_unset() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::full(&[2], 1.0).unwrap().requiring_grad());
    let unused = tape.leaf(Tensor::full(&[2], 1.0).unwrap().requiring_grad());
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert!(tape.grad(unused).is_none());
}

#[test]
fn decision_average_softmax_is_mean_of_softmaxes() {
    let mut r = rng(11);
    let a = rand_tensor(&mut r, &[3, 6]);
    let b = rand_tensor(&mut r, &[3, 6]);
    let soft = |t: &Tensor| -> Vec<f64> {
        t.data()
            .chunks(6)
            .flat_map(|row| {
                let s: f64 = row.iter().map(|v| v.exp()).sum();
                row.iter().map(move |v| v.exp() / s).collect::<Vec<_>>()
            })
            .collect()
    };
    let mut tape = Tape::new();
    let (av, bv) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let d = tape.decision_average(av, bv).unwrap();
    let got = soft(tape.value(d));
    let (pa, pb) = (soft(&a), soft(&b));
    for i in 0..18 {
        assert!((got[i] - 0.5 * (pa[i] + pb[i])).abs() < 1e-14);
    }
}

#[test]
fn per_primitive_gradients_match_finite_differences() {
    let mut r = rng(12);
    let eps = 1e-5;
    let checks: Vec<(f64, usize)> = vec![
        grad_check(
            &[rand_tensor(&mut r, &[2, 2, 5, 5]), rand_tensor(&mut r, &[3, 2, 3, 3]), rand_tensor(&mut r, &[3])],
            &[true, true, true],
            eps,
            1,
            |t, v| t.conv2d(v[0], v[1], v[2], 2, 1),
        ),
        grad_check(&[rand_tensor(&mut r, &[2, 2, 5, 5])], &[true], eps, 2, |t, v| {
            t.pool2d(v[0], PoolMode::Max, 3, 3, 2, 1)
        }),
        grad_check(&[rand_tensor(&mut r, &[2, 2, 4, 4])], &[true], eps, 3, |t, v| {
            t.pool2d(v[0], PoolMode::Avg, 2, 2, 2, 0)
        }),
        grad_check(&[rand_tensor(&mut r, &[2, 3, 3, 3])], &[true], eps, 4, |t, v| {
            t.global_pool(v[0], PoolMode::Max)
        }),
        grad_check(&[rand_tensor(&mut r, &[2, 3, 3, 3])], &[true], eps, 5, |t, v| {
            Ok(t.sigmoid(v[0]))
        }),
        grad_check(&[rand_tensor(&mut r, &[2, 3, 3, 3])], &[true], eps, 6, |t, v| Ok(t.relu(v[0]))),
        grad_check(
            &[rand_tensor(&mut r, &[2, 3, 2, 2]), rand_tensor(&mut r, &[1, 2, 2])],
            &[true, true],
            eps,
            7,
            |t, v| t.mul(v[0], v[1]),
        ),
        grad_check(
            &[rand_tensor(&mut r, &[3, 4]), rand_tensor(&mut r, &[4, 2]), rand_tensor(&mut r, &[2])],
            &[true, true, true],
            eps,
            8,
            |t, v| t.linear(v[0], v[1], v[2]),
        ),
        grad_check(
            &[rand_tensor(&mut r, &[3, 2, 2, 2]), rand_tensor(&mut r, &[2]), rand_tensor(&mut r, &[2])],
            &[true, true, true],
            eps,
            9,
            |t, v| t.batchnorm2d(v[0], v[1], v[2], &mut BnStats::new(2), true),
        ),
        grad_check(&[rand_tensor(&mut r, &[4, 6])], &[true], eps, 10, |t, v| {
            t.softmax_cross_entropy(v[0], &[0, 3, 5, 1])
        }),
        grad_check(
            &[rand_tensor(&mut r, &[2, 6]), rand_tensor(&mut r, &[2, 6])],
            &[true, true],
            eps,
            11,
            |t, v| t.decision_average(v[0], v[1]),
        ),
        grad_check(
            &[rand_tensor(&mut r, &[2, 3]), rand_tensor(&mut r, &[2, 2])],
            &[true, true],
            eps,
            12,
            |t, v| t.concat(&[v[0], v[1]]),
        ),
    ];
    for (i, (err, n)) in checks.iter().enumerate() {
        assert!(*n > 0);
        assert!(*err < 1e-4, "check {i}: relative error {err}");
    }
}

#[test]
fn composed_graph_gradient_matches_finite_differences() {
    let mut r = rng(13);
    let inputs = [
        rand_tensor(&mut r, &[2, 2, 6, 6]),
        rand_tensor(&mut r, &[3, 2, 3, 3]),
        rand_tensor(&mut r, &[3]),
        rand_tensor(&mut r, &[27, 6]),
        rand_tensor(&mut r, &[6]),
    ];
    let (err, n) = grad_check(&inputs, &[false, true, true, true, true], 1e-5, 0, |t, v| {
        let c = t.conv2d(v[0], v[1], v[2], 1, 1)?;
        let a = t.relu(c);
        let p = t.pool2d(a, PoolMode::Max, 2, 2, 2, 0)?;
        let f = t.reshape(p, &[2, 27])?;
        let z = t.linear(f, v[3], v[4])?;
        t.softmax_cross_entropy(z, &[1, 4])
    });
    assert_eq!(n, 54 + 3 + 162 + 6);
    assert!(err < 1e-4, "relative error {err}");
}
