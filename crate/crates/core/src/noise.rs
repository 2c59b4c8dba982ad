//! Seeded additive measurement noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Add i.i.d. Gaussian noise with standard deviation `level · rms(values)`.
/// The same seed always yields the same perturbation; all-zero data are
/// left untouched.
pub fn add_relative_noise(values: &mut [f64], level: f64, seed: u64) -> Result<()> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level {level} must be non-negative")));
    }
    if level == 0.0 || values.is_empty() {
        return Ok(());
    }
    let rms = (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt();
    if rms > 0.0 {
        let normal = Normal::new(0.0, level * rms).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in values.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_sets_the_relative_rms() {
        let mut v = vec![1.0; 20000];
        add_relative_noise(&mut v, 0.3, 5).unwrap();
        let e = (v.iter().map(|x| (x - 1.0).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!((e - 0.3).abs() < 0.01, "{e}");
    }

    #[test]
    fn seeded_and_validated() {
        let mut a = vec![0.5, -1.0, 2.0];
        let mut b = a.clone();
        add_relative_noise(&mut a, 0.1, 9).unwrap();
        add_relative_noise(&mut b, 0.1, 9).unwrap();
        assert_eq!(a, b);
        let mut z = vec![0.0; 4];
        add_relative_noise(&mut z, 1.0, 1).unwrap();
        assert_eq!(z, vec![0.0; 4]);
        assert!(add_relative_noise(&mut b, -0.1, 1).is_err());
        assert!(add_relative_noise(&mut b, f64::NAN, 1).is_err());
    }
}
