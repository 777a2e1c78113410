//! Discrete differential operators on pixel grids.
//!
//! Conventions, shared by everything downstream:
//!
//! * `grad_forward` uses forward differences with replicate (Neumann)
//!   boundary: the difference across the last row/column is 0. The x
//!   component differentiates along columns, y along rows.
//! * `div_backward` is *defined* as the exact negative transpose of
//!   `grad_forward`, so `<grad u, p> = -<u, div p>` holds to machine
//!   precision on every grid.
//! * `hessian` composes backward differences of the forward-difference
//!   components. The second differences are centered 3-point stencils that
//!   vanish on the first/last line of their direction; the mixed terms are
//!   backward-y of forward-x and backward-x of forward-y. All four
//!   components annihilate affine images everywhere, including boundaries.
//! * `div2` is the exact (plain, not negated) transpose of `hessian`:
//!   `<hessian u, q> = <u, div2 q>`.
//!
//! Every operator row is produced by a single stencil source
//! ([`d_stencil_row`]); applications gather over it and adjoints scatter
//! over it, which is what makes the adjoint identities exact.

use crate::field::{ScalarField, TensorField, VectorField};

/// Regularizer differentiation order: first (gradient) or second (Hessian).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

impl Order {
    /// Components per pixel of the operator range (2 for grad, 4 for hessian).
    #[inline]
    pub fn components(self) -> usize {
        match self {
            Order::First => 2,
            Order::Second => 4,
        }
    }
}

/// One stencil entry: (flat pixel index, coefficient).
pub type StencilEntry = (usize, f64);

/// Row of the differential operator for pixel (i, j), component `comp`.
///
/// Entries are ordered so that gather-style evaluation reproduces the exact
/// floating-point grouping of the direct formulas below.
pub fn d_stencil_row(
    order: Order,
    height: usize,
    width: usize,
    i: usize,
    j: usize,
    comp: usize,
    out: &mut Vec<StencilEntry>,
) {
    out.clear();
    let k = i * width + j;
    match (order, comp) {
        // x-forward difference
        (Order::First, 0) => {
            if j + 1 < width {
                out.push((k + 1, 1.0));
                out.push((k, -1.0));
            }
        }
        // y-forward difference
        (Order::First, 1) => {
            if i + 1 < height {
                out.push((k + width, 1.0));
                out.push((k, -1.0));
            }
        }
        // xx: centered second difference along columns, zero on first/last column
        (Order::Second, 0) => {
            if j >= 1 && j + 1 < width {
                out.push((k + 1, 1.0));
                out.push((k, -2.0));
                out.push((k - 1, 1.0));
            }
        }
        // xy: backward-y of forward-x
        (Order::Second, 1) => {
            if i >= 1 && j + 1 < width {
                out.push((k + 1, 1.0));
                out.push((k, -1.0));
                out.push((k - width + 1, -1.0));
                out.push((k - width, 1.0));
            }
        }
        // yx: backward-x of forward-y
        (Order::Second, 2) => {
            if j >= 1 && i + 1 < height {
                out.push((k + width, 1.0));
                out.push((k, -1.0));
                out.push((k + width - 1, -1.0));
                out.push((k - 1, 1.0));
            }
        }
        // yy: centered second difference along rows, zero on first/last row
        (Order::Second, 3) => {
            if i >= 1 && i + 1 < height {
                out.push((k + width, 1.0));
                out.push((k, -2.0));
                out.push((k - width, 1.0));
            }
        }
        _ => panic!("component {comp} out of range for {order:?}"),
    }
}

/// Apply the order's differential operator; output has `order.components()`
/// interleaved components per pixel.
pub fn d_apply(order: Order, u: &ScalarField) -> Vec<f64> {
    let (h, w) = u.shape();
    let c = order.components();
    let uu = u.as_slice();
    let mut out = vec![0.0; c * h * w];
    let mut row = Vec::with_capacity(4);
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            for comp in 0..c {
                d_stencil_row(order, h, w, i, j, comp, &mut row);
                let mut acc = 0.0;
                for &(col, coeff) in &row {
                    acc += coeff * uu[col];
                }
                out[c * k + comp] = acc;
            }
        }
    }
    out
}

/// Apply the plain transpose of the order's differential operator.
///
/// For `Order::First` this equals `-div_backward`; for `Order::Second` it
/// equals `div2`.
pub fn d_adjoint(order: Order, comps: &[f64], height: usize, width: usize) -> ScalarField {
    let c = order.components();
    assert_eq!(comps.len(), c * height * width, "component count mismatch");
    let mut out = vec![0.0; height * width];
    let mut row = Vec::with_capacity(4);
    for i in 0..height {
        for j in 0..width {
            let k = i * width + j;
            for comp in 0..c {
                d_stencil_row(order, height, width, i, j, comp, &mut row);
                let v = comps[c * k + comp];
                for &(col, coeff) in &row {
                    out[col] += coeff * v;
                }
            }
        }
    }
    ScalarField::from_vec(height, width, out).expect("adjoint preserves finiteness")
}

/// Forward-difference gradient with replicate boundary.
pub fn grad_forward(u: &ScalarField) -> VectorField {
    let (h, w) = u.shape();
    let data = d_apply(Order::First, u);
    VectorField::from_vec(h, w, data).expect("gradient of finite field is finite")
}

/// Discrete divergence, the exact negative adjoint of [`grad_forward`].
pub fn div_backward(p: &VectorField) -> ScalarField {
    let (h, w) = p.shape();
    let adj = d_adjoint(Order::First, p.as_slice(), h, w);
    adj.map(|v| -v)
}

/// Discrete Hessian (4 components per pixel: xx, xy, yx, yy).
pub fn hessian(u: &ScalarField) -> TensorField {
    let (h, w) = u.shape();
    let data = d_apply(Order::Second, u);
    TensorField::from_vec(h, w, data).expect("hessian of finite field is finite")
}

/// Second-order divergence, the exact adjoint of [`hessian`]:
/// `<hessian u, q> = <u, div2 q>`.
pub fn div2(q: &TensorField) -> ScalarField {
    let (h, w) = q.shape();
    d_adjoint(Order::Second, q.as_slice(), h, w)
}

/// Triplets of the 5-point Neumann Laplacian `div(grad .)`.
///
/// The matrix is symmetric negative semidefinite; constants span its kernel.
pub fn neumann_laplacian_triplets(height: usize, width: usize) -> Vec<(usize, usize, f64)> {
    // -G^T G assembled row by row from the gradient stencil.
    let mut trips = Vec::with_capacity(5 * height * width);
    let mut row = Vec::with_capacity(4);
    for i in 0..height {
        for j in 0..width {
            for comp in 0..2 {
                d_stencil_row(Order::First, height, width, i, j, comp, &mut row);
                for &(a, va) in &row {
                    for &(b, vb) in &row {
                        trips.push((a, b, -va * vb));
                    }
                }
            }
        }
    }
    trips
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ScalarField {
        ScalarField::from_fn(h, w, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn grad_of_1x2_matches_hand_computation() {
        let u = ScalarField::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
        let g = grad_forward(&u);
        assert_eq!(g.pixel(0, 0), &[1.0, 0.0]);
        assert_eq!(g.pixel(0, 1), &[0.0, 0.0]);
    }

    #[test]
    fn grad_annihilates_constants() {
        let u = ScalarField::constant(5, 7, 3.25);
        assert_eq!(grad_forward(&u).norm2(), 0.0);
    }

    #[test]
    fn div_of_1x2_matches_adjointness_identity() {
        // x-component [1, 1] on a 1x2 grid; only px(0,0) can act.
        let p = VectorField::from_vec(1, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let d = div_backward(&p);
        assert_eq!(d.as_slice(), &[1.0, -1.0]);
    }

    #[test]
    fn div_of_zero_field_is_zero() {
        let p = VectorField::zeros(4, 5);
        assert_eq!(div_backward(&p).norm2(), 0.0);
    }

    #[test]
    fn grad_div_adjointness_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &(h, w) in &[(1usize, 2usize), (2, 2), (8, 8), (16, 16), (13, 7)] {
            let u = random_field(h, w, &mut rng);
            let p = VectorField::from_vec(
                h,
                w,
                (0..2 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let lhs = grad_forward(&u).dot(&p);
            let rhs = -u.dot(&div_backward(&p));
            let scale = u.norm2() * p.norm2();
            assert!(
                (lhs - rhs).abs() <= 1e-12 * scale.max(1.0),
                "adjointness broken on {h}x{w}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn hessian_annihilates_affine_everywhere() {
        // dyadic coefficients keep every intermediate exact
        let u = ScalarField::from_fn(9, 6, |i, j| 0.75 * i as f64 - 1.5 * j as f64 + 0.25);
        let hess = hessian(&u);
        assert_eq!(hess.norm2(), 0.0, "affine image must give zero tensor");
        // generic coefficients cancel to rounding error
        let v = ScalarField::from_fn(9, 6, |i, j| 0.7 * i as f64 - 1.3 * j as f64 + 0.11);
        assert!(hessian(&v).norm2() <= 1e-13);
    }

    #[test]
    fn hessian_of_quadratic_strip_is_two_in_interior() {
        let u = ScalarField::from_fn(1, 8, |_, j| (j * j) as f64);
        let hess = hessian(&u);
        for j in 1..7 {
            assert_eq!(hess.pixel(0, j)[0], 2.0, "xx at column {j}");
        }
        assert_eq!(hess.pixel(0, 0)[0], 0.0);
        assert_eq!(hess.pixel(0, 7)[0], 0.0);
    }

    #[test]
    fn mixed_components_match_cross_derivative() {
        let u = ScalarField::from_fn(6, 6, |i, j| (i * j) as f64);
        let hess = hessian(&u);
        // interior pixels: d2/dxdy (ij) = 1 for both mixed components
        for i in 1..5 {
            for j in 1..4 {
                assert_eq!(hess.pixel(i, j)[1], 1.0, "xy at ({i},{j})");
                assert_eq!(hess.pixel(i, j)[2], 1.0, "yx at ({i},{j})");
            }
        }
    }

    #[test]
    fn hessian_div2_adjointness_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(h, w) in &[(2usize, 2usize), (3, 3), (8, 8), (5, 11)] {
            let u = random_field(h, w, &mut rng);
            let q = TensorField::from_vec(
                h,
                w,
                (0..4 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let lhs = hessian(&u).dot(&q);
            let rhs = u.dot(&div2(&q));
            let scale = u.norm2() * q.norm2();
            assert!(
                (lhs - rhs).abs() <= 1e-12 * scale.max(1.0),
                "hessian adjointness broken on {h}x{w}"
            );
        }
    }

    #[test]
    fn div2_of_constant_tensor_is_boundary_supported() {
        // Column sums of each stencil component telescope to zero away from
        // the boundary, so a constant tensor maps into a boundary band.
        let q = TensorField::from_vec(6, 6, vec![0.5; 4 * 36]).unwrap();
        let d = div2(&q);
        for i in 2..4 {
            for j in 2..4 {
                assert_eq!(d.get(i, j), 0.0, "deep interior must vanish at ({i},{j})");
            }
        }
        assert!(d.norm2() > 0.0, "boundary band must be nonzero");
    }

    #[test]
    fn laplacian_is_symmetric_and_kills_constants() {
        let (h, w) = (5, 4);
        let trips = neumann_laplacian_triplets(h, w);
        let n = h * w;
        let mut dense = vec![0.0; n * n];
        for (r, c, v) in trips {
            dense[r * n + c] += v;
        }
        for r in 0..n {
            let row_sum: f64 = (0..n).map(|c| dense[r * n + c]).sum();
            assert!(row_sum.abs() < 1e-14, "constants must be harmonic");
            for c in 0..n {
                assert_eq!(dense[r * n + c], dense[c * n + r], "symmetry");
            }
        }
    }
}
