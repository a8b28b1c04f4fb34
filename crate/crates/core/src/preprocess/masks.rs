use crate::error::{Error, Result};
use crate::Tensor;

use super::scan::{Landmark, Region};

/// Salient-region masks at two scales: `[1,S/4,S/4]` and `[1,S/8,S/8]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPyramid {
    pub mask1: Tensor,
    pub mask2: Tensor,
}

type P = [f64; 2];

fn cross(o: P, a: P, b: P) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (monotone chain). Collinear and repeated
/// points are dropped, so degenerate inputs give one or two vertices.
pub fn convex_hull(points: &[P]) -> Vec<P> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<P> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &P>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    if hull.is_empty() {
        // Everything collinear: keep the extremes.
        return vec![pts[0], pts[pts.len() - 1]];
    }
    hull
}

fn segment_distance(p: P, a: P, b: P) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

/// Euclidean distance from `p` to a convex CCW polygon (zero inside).
pub fn hull_distance(hull: &[P], p: P) -> f64 {
    match hull.len() {
        0 => f64::INFINITY,
        1 => segment_distance(p, hull[0], hull[0]),
        2 => segment_distance(p, hull[0], hull[1]),
        n => {
            let inside = (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0.0);
            if inside {
                0.0
            } else {
                (0..n).map(|i| segment_distance(p, hull[i], hull[(i + 1) % n])).fold(f64::INFINITY, f64::min)
            }
        }
    }
}

/// Paints each region's landmark hull, dilated by `S/32` canvas pixels, on an
/// `S/4` canvas; the second level is the 2×2 area mean of the first.
pub fn rasterize_masks(landmarks: &[Landmark], size: usize) -> Result<MaskPyramid> {
    if size < 8 || size % 8 != 0 {
        return Err(Error::Input(format!("mask size needs S divisible by 8, got {size}")));
    }
    let h = size / 4;
    let radius = size as f64 / 32.0;
    let mut canvas = vec![0.0; h * h];
    for region in Region::ALL {
        let pts: Vec<P> = landmarks
            .iter()
            .filter(|l| l.region == region)
            .map(|l| [l.x * h as f64, l.y * h as f64])
            .collect();
        if pts.is_empty() {
            return Err(Error::Input(format!("no landmarks for region {}", region.tag())));
        }
        let hull = convex_hull(&pts);
        for y in 0..h {
            for x in 0..h {
                let c = [x as f64 + 0.5, y as f64 + 0.5];
                if hull_distance(&hull, c) <= radius {
                    canvas[y * h + x] = 1.0;
                }
            }
        }
    }
    let h2 = h / 2;
    let mut down = vec![0.0; h2 * h2];
    for y in 0..h2 {
        for x in 0..h2 {
            let s = canvas[2 * y * h + 2 * x]
                + canvas[2 * y * h + 2 * x + 1]
                + canvas[(2 * y + 1) * h + 2 * x]
                + canvas[(2 * y + 1) * h + 2 * x + 1];
            down[y * h2 + x] = s / 4.0;
        }
    }
    Ok(MaskPyramid { mask1: Tensor::new(&[1, h, h], canvas)?, mask2: Tensor::new(&[1, h2, h2], down)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_of_square_with_interior_point() {
        let h = convex_hull(&[[0.0, 0.0], [1.0, 0.0], [0.5, 0.5], [1.0, 1.0], [0.0, 1.0]]);
        assert_eq!(h, vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]);
    }

    #[test]
    fn collinear_hull_keeps_extremes() {
        let h = convex_hull(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]);
        assert_eq!(hull_distance(&h, [1.0, 1.0]), 0.0);
        assert!((hull_distance(&h, [3.0, 2.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distances() {
        let sq = convex_hull(&[[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]);
        assert_eq!(hull_distance(&sq, [1.0, 1.0]), 0.0);
        assert_eq!(hull_distance(&sq, [3.0, 1.0]), 1.0);
        assert!((hull_distance(&sq, [3.0, 3.0]) - 2f64.sqrt()).abs() < 1e-15);
    }
}
