use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolMode {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PoolGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl PoolGeom {
    pub fn new(x: [usize; 4], kh: usize, kw: usize, stride: usize, pad: usize) -> Result<Self> {
        let [n, c, h, w] = x;
        if kh == 0 || kw == 0 || stride == 0 {
            return shape_err("pool2d: window and stride must be positive");
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return shape_err(format!(
                "pool2d: window {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            ));
        }
        if pad >= kh || pad >= kw {
            return shape_err("pool2d: padding must be smaller than the window");
        }
        Ok(Self {
            n,
            c,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        })
    }

    pub fn out_shape(&self) -> [usize; 4] {
        [self.n, self.c, self.ho, self.wo]
    }

    /// Valid input rows/cols covered by the window at output position `o`.
    fn span(&self, o: usize, k: usize, limit: usize) -> std::ops::Range<usize> {
        let start = o * self.stride;
        let lo = start.saturating_sub(self.pad);
        let hi = (start + k).saturating_sub(self.pad).min(limit);
        lo..hi
    }
}

/// Returns the pooled values and, for max pooling, the flat input index that
/// produced each output (first row-major maximum on ties).
pub(crate) fn forward(x: &[f64], g: &PoolGeom, mode: PoolMode) -> (Vec<f64>, Vec<usize>) {
    let mut out = Vec::with_capacity(g.n * g.c * g.ho * g.wo);
    let mut arg = Vec::new();
    let area = (g.kh * g.kw) as f64;
    for plane in 0..g.n * g.c {
        let base = plane * g.h * g.w;
        for oy in 0..g.ho {
            let rows = g.span(oy, g.kh, g.h);
            for ox in 0..g.wo {
                let cols = g.span(ox, g.kw, g.w);
                match mode {
                    PoolMode::Max => {
                        let mut best = f64::NEG_INFINITY;
                        let mut at = base + rows.start * g.w + cols.start;
                        for iy in rows.clone() {
                            for ix in cols.clone() {
                                let v = x[base + iy * g.w + ix];
                                if v > best {
                                    best = v;
                                    at = base + iy * g.w + ix;
                                }
                            }
                        }
                        out.push(best);
                        arg.push(at);
                    }
                    PoolMode::Avg => {
                        let mut s = 0.0;
                        for iy in rows.clone() {
                            for ix in cols.clone() {
                                s += x[base + iy * g.w + ix];
                            }
                        }
                        out.push(s / area);
                    }
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn backward(
    dout: &[f64],
    g: &PoolGeom,
    mode: PoolMode,
    argmax: &[usize],
    len: usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; len];
    match mode {
        PoolMode::Max => {
            for (d, &i) in dout.iter().zip(argmax) {
                dx[i] += d;
            }
        }
        PoolMode::Avg => {
            let area = (g.kh * g.kw) as f64;
            let mut o = 0;
            for plane in 0..g.n * g.c {
                let base = plane * g.h * g.w;
                for oy in 0..g.ho {
                    let rows = g.span(oy, g.kh, g.h);
                    for ox in 0..g.wo {
                        let cols = g.span(ox, g.kw, g.w);
                        let share = dout[o] / area;
                        o += 1;
                        for iy in rows.clone() {
                            for ix in cols.clone() {
                                dx[base + iy * g.w + ix] += share;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Whole-plane reduction producing `[N,C,1,1]`.
pub(crate) fn global_forward(x: &[f64], dims: [usize; 4], mode: PoolMode) -> (Vec<f64>, Vec<usize>) {
    let [n, c, h, w] = dims;
    let plane = h * w;
    let mut out = Vec::with_capacity(n * c);
    let mut arg = Vec::new();
    for p in 0..n * c {
        let vals = &x[p * plane..(p + 1) * plane];
        match mode {
            PoolMode::Max => {
                let mut at = 0;
                for (i, &v) in vals.iter().enumerate() {
                    if v > vals[at] {
                        at = i;
                    }
                }
                out.push(vals[at]);
                arg.push(p * plane + at);
            }
            PoolMode::Avg => out.push(vals.iter().sum::<f64>() / plane as f64),
        }
    }
    (out, arg)
}

pub(crate) fn global_backward(
    dout: &[f64],
    dims: [usize; 4],
    mode: PoolMode,
    argmax: &[usize],
) -> Vec<f64> {
    let [n, c, h, w] = dims;
    let plane = h * w;
    let mut dx = vec![0.0; n * c * plane];
    match mode {
        PoolMode::Max => {
            for (d, &i) in dout.iter().zip(argmax) {
                dx[i] += d;
            }
        }
        PoolMode::Avg => {
            for (p, d) in dout.iter().enumerate() {
                let share = d / plane as f64;
                dx[p * plane..(p + 1) * plane].fill(share);
            }
        }
    }
    dx
}
