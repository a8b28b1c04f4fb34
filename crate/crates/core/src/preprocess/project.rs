use crate::error::{Error, Result};

use super::scan::Scan;

/// Raw orthographic projection of a scan onto an `S×S` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub size: usize,
    /// Planar RGB, `3·S·S`, zero at holes.
    pub texture: Vec<f64>,
    /// Row-major `S·S`, min-max normalized over occupied cells, zero at holes.
    pub depth: Vec<f64>,
    pub holes: Vec<bool>,
}

impl Projection {
    pub fn hole_fraction(&self) -> f64 {
        self.holes.iter().filter(|&&h| h).count() as f64 / self.holes.len() as f64
    }
}

/// Square projection box of a scan: center and side length. A degenerate
/// extent gets side 1 so single points land in the middle.
pub fn projection_box(scan: &Scan) -> ([f64; 2], f64) {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &scan.points {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    (center, if side > 0.0 { side } else { 1.0 })
}

/// Normalized image coordinates `(u, v)` of a point: `u` to the right, `v`
/// downwards, the projection box spanning `[0,1]²`.
pub fn normalized_coords(p: &[f64; 3], center: [f64; 2], side: f64) -> (f64, f64) {
    (0.5 + (p[0] - center[0]) / side, 0.5 - (p[1] - center[1]) / side)
}

/// Grid cell of a normalized coordinate; the far edge folds into the last cell.
pub fn cell_of(u: f64, size: usize) -> usize {
    ((u * size as f64).floor().max(0.0) as usize).min(size - 1)
}

/// Bins points into cells; the point with the largest `z` in a cell sets
/// both its depth and its color.
pub fn project_to_grid(scan: &Scan, size: usize) -> Result<Projection> {
    if scan.points.is_empty() {
        return Err(Error::Input("cannot project an empty scan".into()));
    }
    if size < 16 {
        return Err(Error::Input(format!("grid size {size} is below 16")));
    }
    scan.validate()?;
    let (center, side) = projection_box(scan);
    let mut best: Vec<Option<usize>> = vec![None; size * size];
    for (i, p) in scan.points.iter().enumerate() {
        let (u, v) = normalized_coords(p, center, side);
        let cell = cell_of(v, size) * size + cell_of(u, size);
        match best[cell] {
            Some(j) if scan.points[j][2] >= p[2] => {}
            _ => best[cell] = Some(i),
        }
    }
    let (zmin, zmax) = best
        .iter()
        .flatten()
        .map(|&i| scan.points[i][2])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), z| (a.min(z), b.max(z)));
    let range = zmax - zmin;
    let plane = size * size;
    let mut texture = vec![0.0; 3 * plane];
    let mut depth = vec![0.0; plane];
    let mut holes = vec![true; plane];
    for (cell, b) in best.iter().enumerate() {
        let Some(i) = *b else { continue };
        holes[cell] = false;
        depth[cell] = if range > 0.0 { (scan.points[i][2] - zmin) / range } else { 0.0 };
        for ch in 0..3 {
            texture[ch * plane + cell] = scan.colors[i][ch];
        }
    }
    Ok(Projection { size, texture, depth, holes })
}
