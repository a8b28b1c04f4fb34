//! Gradient-weighted class activation maps.

use crate::error::{Error, Result};
use crate::{ParamStore, Tape, Tensor, Var};

use super::layers::Ctx;
use super::net::{AfNet, ModelInput};

/// Grad-CAM for one sample of a forward pass already recorded on `tape`.
///
/// The score is the `target` logit of row `sample`; `layer` names a marked
/// activation `[N,C,h,w]`. Returns an `out_size × out_size` map in `[0,1]`.
pub fn gradcam_on_tape(
    tape: &mut Tape,
    logits: Var,
    sample: usize,
    target: usize,
    layer: &str,
    out_size: usize,
) -> Result<Tensor> {
    let act = tape.marked(layer)?;
    let [n, classes] = tape.value(logits).dims2()?;
    if target >= classes {
        return Err(Error::Label { label: target, classes });
    }
    if sample >= n {
        return Err(Error::Input(format!("sample {sample} outside batch of {n}")));
    }
    let mut onehot = vec![0.0; n * classes];
    onehot[sample * classes + target] = 1.0;
    let sel = tape.constant(Tensor::new(&[n, classes], onehot)?);
    let picked = tape.mul(logits, sel)?;
    let score = tape.sum(picked);
    tape.backward(score)?;

    let [_, c, h, w] = tape.value(act).dims4()?;
    let plane = h * w;
    let a = &tape.value(act).data()[sample * c * plane..(sample + 1) * c * plane];
    let zeros = vec![0.0; n * c * plane];
    let g = tape.grad(act).unwrap_or(&zeros);
    let g = &g[sample * c * plane..(sample + 1) * c * plane];
    let mut map = vec![0.0; plane];
    for ch in 0..c {
        let gs = &g[ch * plane..(ch + 1) * plane];
        let weight = gs.iter().sum::<f64>() / plane as f64;
        for (m, &v) in map.iter_mut().zip(&a[ch * plane..(ch + 1) * plane]) {
            *m += weight * v;
        }
    }
    for m in &mut map {
        *m = m.max(0.0);
    }
    let up = upsample_bilinear(&map, h, w, out_size, out_size);
    Tensor::new(&[out_size, out_size], min_max_normalize(up))
}

/// Grad-CAM of `model` on sample `sample` of `input`, evaluated with frozen
/// batch statistics.
pub fn gradcam(
    model: &AfNet,
    params: &mut ParamStore,
    input: &ModelInput,
    sample: usize,
    target: usize,
    layer: &str,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let logits = {
        let mut ctx = Ctx::new(&mut tape, params, false);
        model.forward(&mut ctx, input)?
    };
    gradcam_on_tape(&mut tape, logits, sample, target, layer, model.config().input_size)
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn upsample_bilinear(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let coord = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Vec::with_capacity(oh * ow);
    for oy in 0..oh {
        let (y0, y1, fy) = coord(oy, h, oh);
        for ox in 0..ow {
            let (x0, x1, fx) = coord(ox, w, ow);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Rescales to `[0,1]`; a constant map becomes all zeros.
pub fn min_max_normalize(mut v: Vec<f64>) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    for x in &mut v {
        *x = if range > 0.0 { (*x - lo) / range } else { 0.0 };
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_size_upsample_is_identity() {
        let src: Vec<f64> = (0..12).map(|i| i as f64 * 0.3).collect();
        assert_eq!(upsample_bilinear(&src, 3, 4, 3, 4), src);
    }

    #[test]
    fn doubling_interpolates_quarter_steps() {
        let up = upsample_bilinear(&[0.0, 1.0], 1, 2, 1, 4);
        assert_eq!(up, vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn constant_map_normalizes_to_zero() {
        assert_eq!(min_max_normalize(vec![2.0; 3]), vec![0.0; 3]);
        assert_eq!(min_max_normalize(vec![1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
    }
}
