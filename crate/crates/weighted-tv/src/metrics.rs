//! Image quality metrics for a [0, 1] dynamic range.

use crate::error::Result;
use crate::field::ScalarField;
use crate::filter::{gaussian_filter_replicate, gaussian_kernel};

/// Mean squared error.
pub fn mse(u: &ScalarField, reference: &ScalarField) -> Result<f64> {
    u.same_shape(reference, "mse")?;
    let sum: f64 = u
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / u.len() as f64)
}

/// Peak signal-to-noise ratio, `10 log10(1 / MSE)` for unit dynamic range.
/// Identical images report `+inf`.
pub fn psnr(u: &ScalarField, reference: &ScalarField) -> Result<f64> {
    let m = mse(u, reference)?;
    if m == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (1.0 / m).log10())
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

/// Structural similarity with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1, replicate boundary.
pub fn ssim(u: &ScalarField, reference: &ScalarField) -> Result<f64> {
    u.same_shape(reference, "ssim")?;
    let kernel = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;

    let mu_x = gaussian_filter_replicate(u, &kernel);
    let mu_y = gaussian_filter_replicate(reference, &kernel);
    let xx = gaussian_filter_replicate(&u.map(|v| v * v), &kernel);
    let yy = gaussian_filter_replicate(&reference.map(|v| v * v), &kernel);
    let xy = {
        let prod = ScalarField::from_fn(u.height(), u.width(), |i, j| {
            u.get(i, j) * reference.get(i, j)
        });
        gaussian_filter_replicate(&prod, &kernel)
    };

    let n = u.len() as f64;
    let mut acc = 0.0;
    for k in 0..u.len() {
        let mx = mu_x.as_slice()[k];
        let my = mu_y.as_slice()[k];
        let sx = xx.as_slice()[k] - mx * mx;
        let sy = yy.as_slice()[k] - my * my;
        let sxy = xy.as_slice()[k] - mx * my;
        let num = (2.0 * mx * my + c1) * (2.0 * sxy + c2);
        let den = (mx * mx + my * my + c1) * (sx + sy + c2);
        acc += num / den;
    }
    Ok(acc / n)
}
