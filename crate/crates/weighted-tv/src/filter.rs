//! Separable filtering with replicate boundary, plus exact adjoints.
//!
//! Replicate padding keeps the kernel mass at 1 near boundaries, which the
//! localized-residual normalization relies on. The adjoint is the mechanical
//! transpose of the padded convolution (a scatter over the same taps), not
//! another convolution, so adjoint identities hold to machine precision.

use crate::error::{Error, Result};
use crate::field::ScalarField;

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
}

fn conv1d_replicate(src: &ScalarField, kernel: &[f64], axis: Axis) -> ScalarField {
    let (h, w) = src.shape();
    let r = kernel.len() / 2;
    let s = src.as_slice();
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for (t, &kv) in kernel.iter().enumerate() {
                let d = t as isize - r as isize;
                let (ii, jj) = match axis {
                    Axis::X => (i, clamp(j as isize + d, w)),
                    Axis::Y => (clamp(i as isize + d, h), j),
                };
                acc += kv * s[ii * w + jj];
            }
            out[i * w + j] = acc;
        }
    }
    ScalarField::from_vec(h, w, out).expect("convolution of finite field is finite")
}

fn conv1d_replicate_adjoint(src: &ScalarField, kernel: &[f64], axis: Axis) -> ScalarField {
    let (h, w) = src.shape();
    let r = kernel.len() / 2;
    let s = src.as_slice();
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let v = s[i * w + j];
            for (t, &kv) in kernel.iter().enumerate() {
                let d = t as isize - r as isize;
                let (ii, jj) = match axis {
                    Axis::X => (i, clamp(j as isize + d, w)),
                    Axis::Y => (clamp(i as isize + d, h), j),
                };
                out[ii * w + jj] += kv * v;
            }
        }
    }
    ScalarField::from_vec(h, w, out).expect("adjoint of finite field is finite")
}

#[inline]
fn clamp(idx: isize, n: usize) -> usize {
    idx.clamp(0, n as isize - 1) as usize
}

fn check_window(n_w: usize) -> Result<()> {
    if n_w == 0 || n_w % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "window size must be odd and positive, got {n_w}"
        )));
    }
    Ok(())
}

/// Uniform n_w x n_w averaging with replicate boundary (separable).
pub fn box_filter_replicate(src: &ScalarField, n_w: usize) -> Result<ScalarField> {
    check_window(n_w)?;
    let k = vec![1.0 / n_w as f64; n_w];
    Ok(conv1d_replicate(&conv1d_replicate(src, &k, Axis::X), &k, Axis::Y))
}

/// Exact transpose of [`box_filter_replicate`].
pub fn box_filter_replicate_adjoint(src: &ScalarField, n_w: usize) -> Result<ScalarField> {
    check_window(n_w)?;
    let k = vec![1.0 / n_w as f64; n_w];
    Ok(conv1d_replicate_adjoint(
        &conv1d_replicate_adjoint(src, &k, Axis::Y),
        &k,
        Axis::X,
    ))
}

/// Normalized Gaussian taps of the given odd size.
pub(crate) fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    debug_assert!(size % 2 == 1);
    let r = (size / 2) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Separable Gaussian filtering with replicate boundary.
pub(crate) fn gaussian_filter_replicate(src: &ScalarField, kernel: &[f64]) -> ScalarField {
    conv1d_replicate(&conv1d_replicate(src, kernel, Axis::X), kernel, Axis::Y)
}
