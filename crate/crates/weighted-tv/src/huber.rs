//! The Huber integrand and the weighted Huber TV / TV2 energies.

use crate::error::{Error, Result};
use crate::field::{HuberField, ScalarField, GAMMA_MIN};
use crate::ops::{d_apply, Order};

/// Huber value at one pixel: `|z| - gamma/2` on the linear branch
/// (`|z| >= gamma`), `|z|^2 / (2 gamma)` on the quadratic branch.
///
/// `z` is the full component vector at the pixel; `|z|` is its Euclidean
/// (vector) or Frobenius (tensor) norm. `gamma` below [`GAMMA_MIN`] selects
/// the pure TV limit `|z|`.
pub fn huber_eval(gamma: f64, z: &[f64]) -> f64 {
    huber_eval_norm(gamma, norm(z))
}

/// Same as [`huber_eval`] with the norm already computed.
#[inline]
pub fn huber_eval_norm(gamma: f64, norm_z: f64) -> f64 {
    debug_assert!(gamma >= 0.0 && norm_z >= 0.0);
    if gamma < GAMMA_MIN {
        norm_z
    } else if norm_z >= gamma {
        norm_z - 0.5 * gamma
    } else {
        norm_z * norm_z / (2.0 * gamma)
    }
}

/// Gradient of the Huber integrand: `z / max(|z|, gamma)`, with the
/// convention 0 at `z = 0` on the pure TV branch.
pub fn huber_grad(gamma: f64, z: &[f64]) -> Vec<f64> {
    let n = norm(z);
    let denom = n.max(gamma);
    if denom < GAMMA_MIN {
        return vec![0.0; z.len()];
    }
    z.iter().map(|&v| v / denom).collect()
}

#[inline]
fn norm(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Weighted Huber TV (order 1) or TV2 (order 2) energy:
/// sum over pixels of `alpha * f_gamma(D u)` with `D` the gradient or the
/// Hessian. Summation runs row-major, sequentially.
pub fn energy_huber_tv(
    u: &ScalarField,
    alpha: &ScalarField,
    gamma: &HuberField,
    order: Order,
) -> Result<f64> {
    u.same_shape(alpha, "energy_huber_tv alpha")?;
    if u.shape() != gamma.shape() {
        return Err(Error::GridMismatch {
            what: "energy_huber_tv gamma",
            expected: u.shape(),
            got: gamma.shape(),
        });
    }
    let (h, w) = u.shape();
    let c = order.components();
    let du = d_apply(order, u);
    let mut acc = 0.0;
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            let z = &du[c * k..c * (k + 1)];
            acc += alpha.get(i, j) * huber_eval(gamma.get(i, j), z);
        }
    }
    Ok(acc)
}

/// Full lower-level objective: `0.5 ||u - g||^2 + energy_huber_tv`.
pub fn denoise_energy(
    u: &ScalarField,
    g: &ScalarField,
    alpha: &ScalarField,
    gamma: &HuberField,
    order: Order,
) -> Result<f64> {
    u.same_shape(g, "denoise_energy data")?;
    let fidelity: f64 = u
        .as_slice()
        .iter()
        .zip(g.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(0.5 * fidelity + energy_huber_tv(u, alpha, gamma, order)?)
}
