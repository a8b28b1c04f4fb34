//! Browser front end. Three operations, each returning an RGBA strip ready
//! for `ImageData`:
//!
//! * `scan_preview`: a synthetic scan after preprocessing (texture, depth,
//!   region mask side by side);
//! * `mask_attention_preview`: the texture modulated by mask attention with a
//!   hand-set scale and shift strength;
//! * `fusion_preview`: texture and depth fused with importance weights whose
//!   gates are set from two sliders.
//!
//! The plain Rust functions hold the logic and run natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use afnet::model::{adaptive_fuse, iwc_weights, ma_forward, Ctx};
use afnet::preprocess::{preprocess_scan, synth_scan, Expression, Sample};
use afnet::{ParamStore, Tape, Tensor};
use wasm_bindgen::prelude::*;

pub const EXPRESSIONS: [&str; 6] = ["anger", "disgust", "fear", "happiness", "sadness", "surprise"];

pub type DemoResult<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn sample(expression: usize, subject: u32, intensity: u8, size: usize) -> DemoResult<Sample> {
    let e = Expression::from_label(expression).map_err(err)?;
    let scan = synth_scan(e, subject as u64, intensity).map_err(err)?;
    preprocess_scan(&scan, size).map_err(err)
}

fn byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Row-major RGBA of several `[3,S,S]` or `[1,h,w]` panels placed left to
/// right at size `s`; smaller single-channel panels are upscaled by
/// repetition.
fn strip(panels: &[&Tensor], s: usize) -> Vec<u8> {
    let mut out = vec![0u8; panels.len() * s * s * 4];
    let row = panels.len() * s;
    for (p, t) in panels.iter().enumerate() {
        let shape = t.shape();
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        for y in 0..s {
            for x in 0..s {
                let (sy, sx) = (y * h / s, x * w / s);
                let px = |ch: usize| t.data()[ch.min(c - 1) * h * w + sy * w + sx];
                let o = 4 * (y * row + p * s + x);
                out[o] = byte(px(0));
                out[o + 1] = byte(px(1));
                out[o + 2] = byte(px(2));
                out[o + 3] = 255;
            }
        }
    }
    out
}

/// Texture, depth and fine mask of one preprocessed synthetic scan.
pub fn scan_preview_rgba(expression: usize, subject: u32, intensity: u8, size: usize) -> DemoResult<Vec<u8>> {
    let s = sample(expression, subject, intensity, size)?;
    Ok(strip(&[&s.pair.texture, &s.pair.depth, &s.masks.mask1], size))
}

fn unit(shape: &[usize], diag: f64) -> Tensor {
    let c = shape[0];
    let mut data = vec![0.0; c * c];
    for i in 0..c {
        data[i * c + i] = diag;
    }
    Tensor::new(shape, data).expect("square 1x1 kernel")
}

/// One 3-channel mask attention module with `gamma = 1 + scale * mask` and
/// `beta = shift * mask` (both strengths non-negative).
fn ma_params(scale: f64, shift: f64) -> ParamStore {
    let mut p = ParamStore::new();
    let w = [3, 3, 1, 1];
    for (g, inner, outer, bias) in [("gamma", scale, 1.0, 1.0), ("beta", 1.0, shift, 0.0)] {
        p.insert(format!("ma.{g}.conv1.w"), unit(&w, inner));
        p.insert(format!("ma.{g}.conv1.b"), Tensor::zeros(&[3]).expect("shape"));
        p.insert(format!("ma.{g}.conv2.w"), unit(&w, outer));
        p.insert(format!("ma.{g}.conv2.b"), Tensor::full(&[3], bias).expect("shape"));
    }
    p
}

/// Texture downsampled to the fine-mask grid, then the same after mask
/// attention, then the mask.
pub fn mask_attention_rgba(expression: usize, subject: u32, scale: f64, shift: f64, size: usize) -> DemoResult<Vec<u8>> {
    if !(scale >= 0.0 && shift >= 0.0) {
        return Err("scale and shift must be non-negative".into());
    }
    let s = sample(expression, subject, 4, size)?;
    let m = size / 4;
    let small = downsample(&s.pair.texture, 4);
    let mut params = ma_params(scale, shift);
    let mut tape = Tape::new();
    let x = tape.constant(small.clone().reshape(&[1, 3, m, m]).map_err(err)?);
    let mask = tape.constant(s.masks.mask1.clone().reshape(&[1, 1, m, m]).map_err(err)?);
    let y = {
        let mut ctx = Ctx::new(&mut tape, &mut params, false);
        ma_forward(&mut ctx, "ma", x, mask).map_err(err)?
    };
    let out = tape.value(y).clone().reshape(&[3, m, m]).map_err(err)?;
    Ok(strip(&[&small, &out, &s.masks.mask1], size))
}

fn downsample(t: &Tensor, f: usize) -> Tensor {
    let s = t.shape();
    let (c, h, w) = (s[0], s[1] / f, s[2] / f);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in 0..f {
                    for dx in 0..f {
                        acc += t.data()[ch * s[1] * s[2] + (y * f + dy) * s[2] + x * f + dx];
                    }
                }
                out[ch * h * w + y * w + x] = acc / (f * f) as f64;
            }
        }
    }
    Tensor::new(&[c, h, w], out).expect("pooled shape")
}

/// Fused image and the per-channel weights of both modalities.
#[derive(Debug, Clone)]
pub struct FusionView {
    pub rgba: Vec<u8>,
    pub texture_weights: [f64; 3],
    pub depth_weights: [f64; 3],
}

/// Adaptive fusion of texture and depth. Each modality's importance-weight
/// module is a diagonal 1×1 convolution with unit weight and bias `bias/2`,
/// so its gate is `sigmoid(avg + max + bias)` per channel.
pub fn fusion_view(expression: usize, subject: u32, texture_bias: f64, depth_bias: f64, size: usize) -> DemoResult<FusionView> {
    let s = sample(expression, subject, 4, size)?;
    let mut params = ParamStore::new();
    for (name, bias) in [("t", texture_bias), ("d", depth_bias)] {
        params.insert(format!("{name}.conv.w"), unit(&[3, 3, 1, 1], 1.0));
        params.insert(format!("{name}.conv.b"), Tensor::full(&[3], bias / 2.0).map_err(err)?);
    }
    let mut tape = Tape::new();
    let x_t = tape.constant(s.pair.texture.clone().reshape(&[1, 3, size, size]).map_err(err)?);
    let x_d = tape.constant(s.pair.depth.clone().reshape(&[1, 3, size, size]).map_err(err)?);
    let (t_iw, d_iw) = {
        let mut ctx = Ctx::new(&mut tape, &mut params, false);
        (iwc_weights(&mut ctx, "t", x_t).map_err(err)?, iwc_weights(&mut ctx, "d", x_d).map_err(err)?)
    };
    let fused = adaptive_fuse(&mut tape, x_t, x_d, t_iw, d_iw).map_err(err)?;
    let out = tape.value(fused).clone().reshape(&[3, size, size]).map_err(err)?;
    let weights = |v| -> [f64; 3] {
        let d = tape.value(v).data();
        [d[0], d[1], d[2]]
    };
    Ok(FusionView {
        rgba: strip(&[&s.pair.texture, &s.pair.depth, &out], size),
        texture_weights: weights(t_iw),
        depth_weights: weights(d_iw),
    })
}

#[wasm_bindgen]
pub fn expression_names() -> String {
    EXPRESSIONS.join(",")
}

#[wasm_bindgen]
pub fn scan_preview(expression: usize, subject: u32, intensity: u8, size: usize) -> Result<Vec<u8>, JsError> {
    scan_preview_rgba(expression, subject, intensity, size).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn mask_attention_preview(expression: usize, subject: u32, scale: f64, shift: f64, size: usize) -> Result<Vec<u8>, JsError> {
    mask_attention_rgba(expression, subject, scale, shift, size).map_err(|e| JsError::new(&e))
}

/// Fused strip plus the six gate values.
#[wasm_bindgen]
pub struct Fusion {
    rgba: Vec<u8>,
    weights: Vec<f64>,
}

#[wasm_bindgen]
impl Fusion {
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// Texture weights then depth weights.
    pub fn weights(&self) -> Vec<f64> {
        self.weights.clone()
    }
}

#[wasm_bindgen]
pub fn fusion_preview(expression: usize, subject: u32, texture_bias: f64, depth_bias: f64, size: usize) -> Result<Fusion, JsError> {
    let v = fusion_view(expression, subject, texture_bias, depth_bias, size).map_err(|e| JsError::new(&e))?;
    let weights = v.texture_weights.iter().chain(&v.depth_weights).copied().collect();
    Ok(Fusion { rgba: v.rgba, weights })
}
