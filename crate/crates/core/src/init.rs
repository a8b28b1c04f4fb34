//! Parameter initialization.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::tensor::Tensor;

/// Tensor of independent `N(mean, std²)` draws from a ChaCha8 stream seeded
/// with `seed`.
pub fn init_normal(shape: &[usize], mean: f64, std: f64, seed: u64) -> Result<Tensor> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::Input(format!("standard deviation must be >= 0, got {std}")));
    }
    let n = Tensor::zeros(shape)?.numel();
    let mut rng = rng_from_seed(seed);
    let data = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            mean + std * z
        })
        .collect();
    Tensor::new(shape, data)
}

/// He-normal initialization (`std = sqrt(2 / fan_in)`).
pub fn init_he(shape: &[usize], fan_in: usize, seed: u64) -> Result<Tensor> {
    init_normal(shape, 0.0, (2.0 / fan_in.max(1) as f64).sqrt(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_is_exactly_the_mean() {
        let t = init_normal(&[2, 2], 0.0, 0.0, 3).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
        let t = init_normal(&[3], 1.5, 0.0, 3).unwrap();
        assert!(t.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = init_normal(&[4, 3], 0.0, 0.02, 11).unwrap();
        let b = init_normal(&[4, 3], 0.0, 0.02, 11).unwrap();
        let c = init_normal(&[4, 3], 0.0, 0.02, 12).unwrap();
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn sample_mean_within_four_standard_errors() {
        let t = init_normal(&[64, 64, 1, 1], 0.0, 0.02, 2024).unwrap();
        let mean = t.data().iter().sum::<f64>() / 4096.0;
        assert!(mean.abs() < 4.0 * 0.02 / 4096f64.sqrt(), "mean {mean}");
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4095.0;
        assert!((var.sqrt() - 0.02).abs() < 0.002);
    }

    #[test]
    fn rejects_bad_shape_and_std() {
        assert!(matches!(init_normal(&[2, 0], 0.0, 1.0, 0), Err(Error::Shape(_))));
        assert!(init_normal(&[2], 0.0, -1.0, 0).is_err());
    }
}
