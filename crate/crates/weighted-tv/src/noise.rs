//! Deterministic Gaussian noise synthesis.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Add i.i.d. zero-mean Gaussian noise with the given variance.
///
/// The result is not clipped to [0, 1]; the statistics-based objective
/// models unclipped residuals. The same seed yields bit-identical output.
pub fn add_gaussian_noise(u: &ScalarField, variance: f64, seed: u64) -> Result<ScalarField> {
    if !(variance >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be nonnegative, got {variance}"
        )));
    }
    if variance == 0.0 {
        return Ok(u.clone());
    }
    let normal = Normal::new(0.0, variance.sqrt())
        .map_err(|e| Error::InvalidParameter(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = u
        .as_slice()
        .iter()
        .map(|&v| v + normal.sample(&mut rng))
        .collect();
    ScalarField::from_vec(u.height(), u.width(), data)
}
