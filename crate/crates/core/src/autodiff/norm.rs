//! Per-channel batch normalization over `(N, H, W)`.

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Running statistics used in evaluation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

pub(crate) struct BnForward {
    pub out: Vec<f64>,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn forward(
    x: &[f64],
    dims: [usize; 4],
    scale: &[f64],
    shift: &[f64],
    stats: &mut BnStats,
    training: bool,
) -> BnForward {
    let [n, c, h, w] = dims;
    let plane = h * w;
    let m = (n * plane) as f64;
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let (mean, var) = if training {
            let mut s = 0.0;
            for i in 0..n {
                let b = (i * c + ch) * plane;
                s += x[b..b + plane].iter().sum::<f64>();
            }
            let mean = s / m;
            let mut ss = 0.0;
            for i in 0..n {
                let b = (i * c + ch) * plane;
                ss += x[b..b + plane].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
            }
            let var = ss / m;
            let unbiased = if m > 1.0 { ss / (m - 1.0) } else { var };
            stats.mean[ch] = (1.0 - BN_MOMENTUM) * stats.mean[ch] + BN_MOMENTUM * mean;
            stats.var[ch] = (1.0 - BN_MOMENTUM) * stats.var[ch] + BN_MOMENTUM * unbiased;
            (mean, var)
        } else {
            (stats.mean[ch], stats.var[ch])
        };
        let is = 1.0 / (var + BN_EPS).sqrt();
        inv_std[ch] = is;
        for i in 0..n {
            let b = (i * c + ch) * plane;
            for j in b..b + plane {
                let xh = (x[j] - mean) * is;
                xhat[j] = xh;
                out[j] = scale[ch] * xh + shift[ch];
            }
        }
    }
    BnForward { out, xhat, inv_std }
}

pub(crate) struct BnGrads {
    pub dx: Vec<f64>,
    pub dscale: Vec<f64>,
    pub dshift: Vec<f64>,
}

pub(crate) fn backward(
    dout: &[f64],
    dims: [usize; 4],
    scale: &[f64],
    xhat: &[f64],
    inv_std: &[f64],
    training: bool,
) -> BnGrads {
    let [n, c, h, w] = dims;
    let plane = h * w;
    let m = (n * plane) as f64;
    let mut dx = vec![0.0; dout.len()];
    let mut dscale = vec![0.0; c];
    let mut dshift = vec![0.0; c];
    for ch in 0..c {
        let (mut sd, mut sdx) = (0.0, 0.0);
        for i in 0..n {
            let b = (i * c + ch) * plane;
            for j in b..b + plane {
                sd += dout[j];
                sdx += dout[j] * xhat[j];
            }
        }
        dshift[ch] = sd;
        dscale[ch] = sdx;
        let k = scale[ch] * inv_std[ch];
        for i in 0..n {
            let b = (i * c + ch) * plane;
            for j in b..b + plane {
                dx[j] = if training {
                    k * (dout[j] - sd / m - xhat[j] * sdx / m)
                } else {
                    k * dout[j]
                };
            }
        }
    }
    BnGrads { dx, dscale, dshift }
}
