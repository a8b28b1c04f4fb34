//! Parametric expressive faces. Each expression displaces and tints its own
//! combination of regions; intensity scales both linearly.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, derive_seed_idx, rng_from_seed};

use super::scan::{Expression, Landmark, Region, Scan};

/// Points per side of the sampling grid.
pub const SYNTH_GRID: usize = 128;
/// Half-width of the square sampling domain in millimetres.
pub const SYNTH_HALF_WIDTH: f64 = 100.0;

/// Overall strength of the expression fields relative to the tabulated
/// amplitudes.
const EXPRESSION_GAIN: f64 = 3.0;

fn expression_scale(intensity: u8) -> f64 {
    EXPRESSION_GAIN * intensity as f64 / 4.0
}

/// Anisotropic Gaussian placed relative to a region center (mm).
#[derive(Debug, Clone, Copy)]
struct Blob {
    region: Region,
    dx: f64,
    dy: f64,
    sx: f64,
    sy: f64,
    /// Mirror `dx` for the right eye so both sides move symmetrically.
    mirrored: bool,
}

const fn blob(region: Region, dx: f64, dy: f64, sx: f64, sy: f64) -> Blob {
    Blob { region, dx, dy, sx, sy, mirrored: false }
}

const fn both_eyes(dx: f64, dy: f64, sx: f64, sy: f64) -> [Blob; 2] {
    [
        Blob { region: Region::LeftEye, dx, dy, sx, sy, mirrored: false },
        Blob { region: Region::RightEye, dx, dy, sx, sy, mirrored: true },
    ]
}

/// Symmetric pair about the mouth or nose center.
const fn pair(region: Region, dx: f64, dy: f64, sx: f64, sy: f64) -> [Blob; 2] {
    [blob(region, -dx, dy, sx, sy), blob(region, dx, dy, sx, sy)]
}

/// Depth displacements (mm at intensity 4, before the gain) and colour shifts
/// per class.
fn expression_fields(e: Expression) -> (Vec<(Blob, f64)>, Vec<(Blob, [f64; 3])>) {
    use Region::*;
    let mut disp = Vec::new();
    let mut tint = Vec::new();
    let mut d = |bs: &[Blob], a: f64| disp.extend(bs.iter().map(|&b| (b, a)));
    match e {
        Expression::Anger => {
            d(&both_eyes(6.0, 12.0, 10.0, 5.0), -8.0);
            d(&[blob(Mouth, 0.0, 0.0, 16.0, 5.0)], 6.0);
            tint.extend(pair(Nose, 30.0, -6.0, 14.0, 14.0).map(|b| (b, [0.18, -0.06, -0.06])));
        }
        Expression::Disgust => {
            d(&[blob(Nose, 0.0, 14.0, 10.0, 6.0)], 9.0);
            d(&[blob(Mouth, 0.0, 8.0, 14.0, 5.0)], 7.0);
            tint.push((blob(Nose, 0.0, 10.0, 14.0, 12.0), [-0.06, 0.10, -0.06]));
        }
        Expression::Fear => {
            d(&both_eyes(0.0, 0.0, 10.0, 8.0), -7.0);
            d(&both_eyes(0.0, 16.0, 12.0, 5.0), 6.0);
            d(&pair(Mouth, 18.0, 0.0, 7.0, 5.0), -6.0);
            tint.push((blob(Nose, 0.0, 55.0, 28.0, 18.0), [-0.12, -0.12, -0.04]));
        }
        Expression::Happiness => {
            d(&pair(Mouth, 20.0, 6.0, 7.0, 6.0), 9.0);
            d(&pair(Nose, 30.0, -8.0, 12.0, 10.0), 7.0);
            tint.extend(pair(Nose, 30.0, -8.0, 12.0, 12.0).map(|b| (b, [0.14, -0.02, 0.04])));
        }
        Expression::Sadness => {
            d(&both_eyes(10.0, 14.0, 6.0, 6.0), 7.0);
            d(&pair(Mouth, 20.0, -6.0, 7.0, 6.0), -8.0);
            tint.extend(both_eyes(0.0, -12.0, 10.0, 5.0).map(|b| (b, [-0.08, -0.04, 0.12])));
        }
        Expression::Surprise => {
            d(&both_eyes(0.0, 20.0, 14.0, 6.0), 9.0);
            d(&[blob(Mouth, 0.0, -4.0, 10.0, 14.0)], -15.0);
            tint.push((blob(Mouth, 0.0, -4.0, 8.0, 10.0), [-0.4, -0.3, -0.3]));
        }
    }
    (disp, tint)
}

/// Subject-specific geometry.
#[derive(Debug, Clone)]
struct Face {
    ax: f64,
    ay: f64,
    height: f64,
    nose_amp: f64,
    centers: [[f64; 2]; 4],
    skin: [f64; 3],
}

impl Face {
    fn new(subject_seed: u64) -> Self {
        let mut rng = rng_from_seed(derive_seed(subject_seed, "synth/subject"));
        let mut j = |amp: f64| rng.random_range(-amp..=amp);
        let spread = 1.0 + j(0.06);
        let base: [[f64; 2]; 4] = [[-28.0 * spread, 22.0], [28.0 * spread, 22.0], [0.0, -2.0], [0.0, -40.0]];
        let mut centers = base;
        for c in &mut centers {
            c[0] += j(3.0);
            c[1] += j(3.0);
        }
        Self {
            ax: 72.0 * (1.0 + j(0.06)),
            ay: 92.0 * (1.0 + j(0.05)),
            height: 55.0 * (1.0 + j(0.08)),
            nose_amp: 18.0 * (1.0 + j(0.15)),
            centers,
            skin: [0.82 + j(0.08), 0.64 + j(0.08), 0.52 + j(0.08)],
        }
    }

    fn center(&self, r: Region) -> [f64; 2] {
        self.centers[r as usize]
    }

    fn gauss(&self, b: &Blob, x: f64, y: f64) -> f64 {
        let c = self.center(b.region);
        let dx = if b.mirrored { -b.dx } else { b.dx };
        let (u, v) = ((x - c[0] - dx) / b.sx, (y - c[1] - b.dy) / b.sy);
        (-0.5 * (u * u + v * v)).exp()
    }

    /// Neutral surface height.
    fn base_z(&self, x: f64, y: f64) -> f64 {
        let rho2 = (x / self.ax).powi(2) + (y / self.ay).powi(2);
        if rho2 >= 1.0 {
            return 0.0;
        }
        let shell = self.height * (1.0 - rho2).powi(2);
        let nose = self.center(Region::Nose);
        let ridge = self.nose_amp * (-0.5 * (((x - nose[0]) / 8.0).powi(2) + ((y - nose[1] - 6.0) / 20.0).powi(2))).exp();
        let sockets: f64 = [Region::LeftEye, Region::RightEye]
            .iter()
            .map(|&r| {
                let c = self.center(r);
                -6.0 * (-0.5 * (((x - c[0]) / 10.0).powi(2) + ((y - c[1]) / 8.0).powi(2))).exp()
            })
            .sum();
        // Fade the features out towards the rim so the surface stays smooth.
        shell + (ridge + sockets) * (1.0 - rho2).powi(2)
    }

    fn base_color(&self, x: f64, y: f64) -> [f64; 3] {
        let rho2 = (x / self.ax).powi(2) + (y / self.ay).powi(2);
        if rho2 >= 1.0 {
            return [0.12, 0.12, 0.14];
        }
        for r in [Region::LeftEye, Region::RightEye] {
            let c = self.center(r);
            if ((x - c[0]) / 9.0).powi(2) + ((y - c[1]) / 4.5).powi(2) < 1.0 {
                return [0.25, 0.18, 0.15];
            }
        }
        let m = self.center(Region::Mouth);
        if ((x - m[0]) / 20.0).powi(2) + ((y - m[1]) / 6.0).powi(2) < 1.0 {
            return [0.72, 0.32, 0.33];
        }
        self.skin
    }

    fn landmarks(&self) -> Vec<Landmark> {
        let to_norm = |region: Region, p: [f64; 2]| Landmark {
            region,
            x: 0.5 + p[0] / (2.0 * SYNTH_HALF_WIDTH),
            y: 0.5 - p[1] / (2.0 * SYNTH_HALF_WIDTH),
        };
        let offsets: [(Region, &[[f64; 2]]); 4] = [
            (Region::LeftEye, &[[-10.0, 0.0], [10.0, 0.0], [0.0, -5.0], [0.0, 13.0]]),
            (Region::RightEye, &[[-10.0, 0.0], [10.0, 0.0], [0.0, -5.0], [0.0, 13.0]]),
            (Region::Nose, &[[0.0, 22.0], [-10.0, -6.0], [10.0, -6.0], [0.0, -10.0]]),
            (Region::Mouth, &[[-21.0, 0.0], [21.0, 0.0], [0.0, 7.0], [0.0, -7.0]]),
        ];
        offsets
            .iter()
            .flat_map(|&(r, offs)| {
                let c = self.center(r);
                offs.iter().map(move |o| to_norm(r, [c[0] + o[0], c[1] + o[1]]))
            })
            .collect()
    }
}

/// Depth displacement of the expression at `(x, y)`, in mm.
fn displacement(face: &Face, disp: &[(Blob, f64)], scale: f64, x: f64, y: f64) -> f64 {
    disp.iter().map(|(b, a)| scale * a * face.gauss(b, x, y)).sum()
}

/// Deterministic synthetic scan for `(expression, subject_seed, intensity)`.
/// The sampling grid covers `[-100, 100]²` mm so the projection box is the
/// same for every scan.
pub fn synth_scan(expression: Expression, subject_seed: u64, intensity: u8) -> Result<Scan> {
    if !(1..=4).contains(&intensity) {
        return Err(Error::Input(format!("intensity must be in 1..=4, got {intensity}")));
    }
    let face = Face::new(subject_seed);
    let (disp, tint) = expression_fields(expression);
    let scale = expression_scale(intensity);
    let noise_seed = derive_seed_idx(subject_seed, "synth/noise", (expression.label() * 8 + intensity as usize) as u64);
    let mut rng = rng_from_seed(noise_seed);
    let n = SYNTH_GRID;
    let step = 2.0 * SYNTH_HALF_WIDTH / (n - 1) as f64;
    let mut points = Vec::with_capacity(n * n);
    let mut colors = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let x = -SYNTH_HALF_WIDTH + ix as f64 * step;
            let y = -SYNTH_HALF_WIDTH + iy as f64 * step;
            let on_face = (x / face.ax).powi(2) + (y / face.ay).powi(2) < 1.0;
            let mut z = face.base_z(x, y) + rng.random_range(-0.3..=0.3);
            if on_face {
                z += displacement(&face, &disp, scale, x, y);
            }
            if rng.random_bool(0.002) {
                z += 15.0;
            }
            let mut c = face.base_color(x, y);
            if on_face {
                for (b, dc) in &tint {
                    let g = face.gauss(b, x, y);
                    for k in 0..3 {
                        c[k] += scale * dc[k] * g;
                    }
                }
            }
            for v in &mut c {
                *v = (*v + rng.random_range(-0.02..=0.02)).clamp(0.0, 1.0);
            }
            points.push([x, y, z]);
            colors.push(c);
        }
    }
    Ok(Scan {
        points,
        colors,
        landmarks: face.landmarks(),
        subject_id: subject_seed,
        expression,
        intensity,
    })
}

/// Norm of the expression displacement field over the sampling grid (mm),
/// noise excluded.
pub fn displacement_norm(expression: Expression, subject_seed: u64, intensity: u8) -> f64 {
    let face = Face::new(subject_seed);
    let (disp, _) = expression_fields(expression);
    let scale = expression_scale(intensity);
    let n = SYNTH_GRID;
    let step = 2.0 * SYNTH_HALF_WIDTH / (n - 1) as f64;
    let mut acc = 0.0;
    for iy in 0..n {
        for ix in 0..n {
            let x = -SYNTH_HALF_WIDTH + ix as f64 * step;
            let y = -SYNTH_HALF_WIDTH + iy as f64 * step;
            if (x / face.ax).powi(2) + (y / face.ay).powi(2) < 1.0 {
                acc += displacement(&face, &disp, scale, x, y).powi(2);
            }
        }
    }
    acc.sqrt()
}
