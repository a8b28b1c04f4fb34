//! Depth-map cleanup: outlier removal, hole filling, median denoising.
//!
//! Windows shrink symmetrically at the border (a cell `d` pixels from the
//! edge uses radius `min(r, d)`), which keeps planes fixed under every stage.

use crate::error::{Error, Result};

/// Tunables for [`surface_clean_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CleanParams {
    /// Cells further than `outlier_k` robust deviations from their 5×5
    /// median are treated as holes.
    pub outlier_k: f64,
    /// Lower bound on the robust deviation, in normalized depth units.
    pub sigma_floor: f64,
    /// The three stages repeat until nothing changes, at most this often.
    pub max_passes: usize,
}

impl Default for CleanParams {
    fn default() -> Self {
        Self { outlier_k: 3.0, sigma_floor: 2e-3, max_passes: 64 }
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of the valid cells in the symmetric window around `(y, x)`.
fn window_median(
    src: &[f64],
    valid: Option<&[bool]>,
    size: usize,
    y: usize,
    x: usize,
    radius: usize,
    buf: &mut Vec<f64>,
) -> Option<f64> {
    let r = radius.min(y).min(x).min(size - 1 - y).min(size - 1 - x);
    buf.clear();
    for yy in y - r..=y + r {
        for xx in x - r..=x + r {
            let i = yy * size + xx;
            if valid.is_none_or(|v| v[i]) {
                buf.push(src[i]);
            }
        }
    }
    (!buf.is_empty()).then(|| median(buf))
}

/// Marks cells whose residual against the 5×5 median exceeds `k` robust
/// standard deviations (1.4826 · MAD of all residuals) as holes.
pub fn remove_outliers(depth: &[f64], holes: &mut [bool], size: usize, params: &CleanParams) {
    let valid: Vec<bool> = holes.iter().map(|h| !h).collect();
    let mut buf = Vec::with_capacity(25);
    let mut residuals = vec![None; depth.len()];
    for y in 0..size {
        for x in 0..size {
            let i = y * size + x;
            if valid[i] {
                let m = window_median(depth, Some(&valid), size, y, x, 2, &mut buf).unwrap_or(depth[i]);
                residuals[i] = Some(depth[i] - m);
            }
        }
    }
    let mut r: Vec<f64> = residuals.iter().flatten().copied().collect();
    if r.is_empty() {
        return;
    }
    let center = median(&mut r);
    let mut dev: Vec<f64> = r.iter().map(|v| (v - center).abs()).collect();
    let sigma = (1.4826 * median(&mut dev)).max(params.sigma_floor);
    for (i, res) in residuals.iter().enumerate() {
        if let Some(res) = res {
            if res.abs() > params.outlier_k * sigma {
                holes[i] = true;
            }
        }
    }
}

/// Fills holes by repeated neighbour means: every sweep, each hole with at
/// least one known 8-neighbour takes their mean.
pub fn fill_holes(values: &mut [f64], holes: &[bool], size: usize) -> Result<()> {
    let mut known: Vec<bool> = holes.iter().map(|h| !h).collect();
    if !known.iter().any(|&k| k) {
        return Err(Error::Input("cannot fill a map that is all holes".into()));
    }
    let mut pending: Vec<usize> = (0..values.len()).filter(|&i| !known[i]).collect();
    while !pending.is_empty() {
        let mut updates = Vec::new();
        for &i in &pending {
            let (y, x) = (i / size, i % size);
            let mut first = None;
            let mut acc = 0.0;
            let mut n = 0usize;
            for yy in y.saturating_sub(1)..=(y + 1).min(size - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(size - 1) {
                    let j = yy * size + xx;
                    if j != i && known[j] {
                        // Offsets from the first neighbour keep constant
                        // neighbourhoods exact.
                        let base = *first.get_or_insert(values[j]);
                        acc += values[j] - base;
                        n += 1;
                    }
                }
            }
            if let Some(base) = first {
                updates.push((i, base + acc / n as f64));
            }
        }
        for &(i, v) in &updates {
            values[i] = v;
            known[i] = true;
        }
        pending.retain(|&i| !known[i]);
    }
    Ok(())
}

/// 3×3 median filter.
pub fn median3(values: &[f64], size: usize) -> Vec<f64> {
    let mut buf = Vec::with_capacity(9);
    let mut out = vec![0.0; values.len()];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = window_median(values, None, size, y, x, 1, &mut buf).expect("window holds the cell");
        }
    }
    out
}

/// [`surface_clean_with`] under default parameters.
pub fn surface_clean(depth: &[f64], holes: &[bool], size: usize) -> Result<Vec<f64>> {
    surface_clean_with(depth, holes, size, &CleanParams::default())
}

/// Outlier removal, hole filling and 3×3 median, clamped to `[0,1]`, repeated
/// until a pass leaves the map unchanged. The result is a fixed point, so a
/// second call returns it as is.
pub fn surface_clean_with(depth: &[f64], holes: &[bool], size: usize, params: &CleanParams) -> Result<Vec<f64>> {
    if depth.len() != size * size || holes.len() != depth.len() {
        return Err(Error::Shape(format!("surface_clean: expected {size}x{size} maps")));
    }
    if holes.iter().all(|&h| h) {
        return Err(Error::Input("depth map is all holes".into()));
    }
    let mut cur = depth.to_vec();
    let mut cur_holes = holes.to_vec();
    for _ in 0..params.max_passes.max(1) {
        let mut h = cur_holes.clone();
        remove_outliers(&cur, &mut h, size, params);
        let mut filled = cur.clone();
        fill_holes(&mut filled, &h, size)?;
        let next: Vec<f64> = median3(&filled, size).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let done = !cur_holes.iter().any(|&h| h) && next == cur;
        cur = next;
        cur_holes.iter_mut().for_each(|h| *h = false);
        if done {
            break;
        }
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_median_averages_middle_pair() {
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&mut [5.0, 1.0, 3.0]), 3.0);
    }

    #[test]
    fn border_windows_shrink_symmetrically() {
        // A ramp survives the median filter, corners included.
        let size = 5;
        let ramp: Vec<f64> = (0..25).map(|i| 0.1 * (i / size) as f64 + 0.03 * (i % size) as f64).collect();
        assert_eq!(median3(&ramp, size), ramp);
    }

    #[test]
    fn all_holes_is_an_input_error() {
        assert!(matches!(surface_clean(&[0.0; 16], &[true; 16], 4), Err(Error::Input(_))));
    }
}
