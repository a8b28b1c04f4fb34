//! 2D cross-correlation via batched im2col.
//!
//! The column matrix has one row per `(cin, ki, kj)` tap and one column per
//! `(n, oy, ox)` output location, so every sample of the batch shares a single
//! GEMM against the `[Cout, Cin*kh*kw]` weight matrix.

use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: [usize; 4], w: [usize; 4], stride: usize, pad: usize) -> Result<Self> {
        let [n, cin, h, wd] = x;
        let [cout, wcin, kh, kw] = w;
        if cin != wcin {
            return shape_err(format!(
                "conv2d: input has {cin} channels but kernel expects {wcin}"
            ));
        }
        if stride == 0 {
            return shape_err("conv2d: stride must be positive");
        }
        if h + 2 * pad < kh || wd + 2 * pad < kw {
            return shape_err(format!(
                "conv2d: kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad,
                wd + 2 * pad
            ));
        }
        Ok(Self {
            n,
            cin,
            h,
            w: wd,
            cout,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (wd + 2 * pad - kw) / stride + 1,
        })
    }

    fn taps(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn plane_out(&self) -> usize {
        self.ho * self.wo
    }

    fn cols(&self) -> usize {
        self.n * self.plane_out()
    }

    pub fn out_shape(&self) -> [usize; 4] {
        [self.n, self.cout, self.ho, self.wo]
    }

    /// Source index in the padded frame, or `None` when the tap lands in padding.
    #[inline]
    fn src(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        (o * self.stride + k).checked_sub(self.pad).filter(|&i| i < limit)
    }
}

fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let cols = g.cols();
    let p = g.plane_out();
    let mut col = vec![0.0; g.taps() * cols];
    for c in 0..g.cin {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for n in 0..g.n {
                    let xbase = (n * g.cin + c) * g.h * g.w;
                    for oy in 0..g.ho {
                        let Some(iy) = g.src(oy, ki, g.h) else { continue };
                        let d = n * p + oy * g.wo;
                        for ox in 0..g.wo {
                            if let Some(ix) = g.src(ox, kj, g.w) {
                                dst[d + ox] = x[xbase + iy * g.w + ix];
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im(dcol: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let cols = g.cols();
    let p = g.plane_out();
    for c in 0..g.cin {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &dcol[row * cols..(row + 1) * cols];
                for n in 0..g.n {
                    let xbase = (n * g.cin + c) * g.h * g.w;
                    for oy in 0..g.ho {
                        let Some(iy) = g.src(oy, ki, g.h) else { continue };
                        let s = n * p + oy * g.wo;
                        for ox in 0..g.wo {
                            if let Some(ix) = g.src(ox, kj, g.w) {
                                dx[xbase + iy * g.w + ix] += src[s + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Dot product with a fixed eight-way accumulation order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let (x, y) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn forward(x: &[f64], w: &[f64], b: &[f64], g: &ConvGeom) -> Vec<f64> {
    let col = im2col(x, g);
    let (k, cols, p) = (g.taps(), g.cols(), g.plane_out());
    let mut out = vec![0.0; g.n * g.cout * p];
    let mut row = vec![0.0; cols];
    for o in 0..g.cout {
        row.fill(b[o]);
        let wrow = &w[o * k..(o + 1) * k];
        for (kk, &wv) in wrow.iter().enumerate() {
            axpy(wv, &col[kk * cols..(kk + 1) * cols], &mut row);
        }
        for n in 0..g.n {
            out[(n * g.cout + o) * p..(n * g.cout + o + 1) * p]
                .copy_from_slice(&row[n * p..(n + 1) * p]);
        }
    }
    out
}

pub(crate) struct ConvGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
}

pub(crate) fn backward(
    x: &[f64],
    w: &[f64],
    dout: &[f64],
    g: &ConvGeom,
    need: (bool, bool, bool),
) -> ConvGrads {
    let (k, cols, p) = (g.taps(), g.cols(), g.plane_out());
    // [Cout, N*P] view of the upstream gradient
    let mut dmat = vec![0.0; g.cout * cols];
    for n in 0..g.n {
        for o in 0..g.cout {
            dmat[o * cols + n * p..o * cols + (n + 1) * p]
                .copy_from_slice(&dout[(n * g.cout + o) * p..(n * g.cout + o + 1) * p]);
        }
    }
    let db = need.2.then(|| {
        (0..g.cout)
            .map(|o| dmat[o * cols..(o + 1) * cols].iter().sum())
            .collect()
    });
    let col = (need.0 || need.1).then(|| im2col(x, g));
    let dw = if need.1 {
        let col = col.as_deref().unwrap_or_default();
        let mut dw = vec![0.0; g.cout * k];
        for o in 0..g.cout {
            let drow = &dmat[o * cols..(o + 1) * cols];
            for kk in 0..k {
                dw[o * k + kk] = dot(drow, &col[kk * cols..(kk + 1) * cols]);
            }
        }
        Some(dw)
    } else {
        None
    };
    let dx = need.0.then(|| {
        let mut dcol = vec![0.0; k * cols];
        for o in 0..g.cout {
            let drow = &dmat[o * cols..(o + 1) * cols];
            for kk in 0..k {
                axpy(w[o * k + kk], drow, &mut dcol[kk * cols..(kk + 1) * cols]);
            }
        }
        let mut dx = vec![0.0; x.len()];
        col2im(&dcol, g, &mut dx);
        dx
    });
    ConvGrads { dx, dw, db }
}
