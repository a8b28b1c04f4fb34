use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Tensor;

use super::clean::{fill_holes, surface_clean};
use super::masks::{rasterize_masks, MaskPyramid};
use super::project::project_to_grid;
use super::scan::Scan;

/// Pixel-aligned texture and depth images, both `[3,S,S]` in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityPair {
    pub texture: Tensor,
    pub depth: Tensor,
}

/// Everything the network consumes for one scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub pair: ModalityPair,
    pub masks: MaskPyramid,
}

/// Projection, depth cleanup, texture hole filling and mask rasterization.
pub fn preprocess_scan(scan: &Scan, size: usize) -> Result<Sample> {
    let proj = project_to_grid(scan, size)?;
    let plane = size * size;
    let depth = surface_clean(&proj.depth, &proj.holes, size)?;
    let mut texture = proj.texture;
    for ch in texture.chunks_mut(plane) {
        fill_holes(ch, &proj.holes, size)?;
    }
    let depth3: Vec<f64> = depth.iter().chain(&depth).chain(&depth).copied().collect();
    let masks = rasterize_masks(&scan.landmarks, size)?;
    Ok(Sample {
        pair: ModalityPair {
            texture: Tensor::new(&[3, size, size], texture)?,
            depth: Tensor::new(&[3, size, size], depth3)?,
        },
        masks,
    })
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary PPM of a `[3,H,W]` image in `[0,1]`.
pub fn write_ppm(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    let s = image.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::Shape(format!("ppm needs [3,H,W], got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let plane = h * w;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for i in 0..plane {
        for ch in 0..3 {
            out.push(to_byte(image.data()[ch * plane + i]));
        }
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Binary PGM of the first channel of an image whose last two axes are
/// `H, W`.
pub fn write_pgm(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    let s = image.shape();
    if s.len() < 2 {
        return Err(Error::Shape(format!("pgm needs at least two axes, got {s:?}")));
    }
    let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data()[..h * w].iter().map(|&v| to_byte(v)));
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}
