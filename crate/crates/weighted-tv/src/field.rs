//! Pixel grids: scalar images, per-pixel 2-vectors (gradients, first-order
//! duals) and per-pixel 2x2 tensors (Hessians, second-order duals).
//!
//! All data is stored row-major with `f64` entries; vector/tensor components
//! are interleaved per pixel. Sums and norms accumulate sequentially in
//! row-major order, so results are deterministic.

use crate::error::{Error, Result};

/// Floor below which a Huber parameter is treated as exactly zero (pure TV).
pub const GAMMA_MIN: f64 = 1e-12;

/// H x W grid of real values (images, weights, residual maps).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "empty grid");
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "empty grid");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::InvalidParameter(format!(
                "scalar field {}x{} needs {} entries, got {}",
                height,
                width,
                height * width,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("ScalarField::from_vec"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.width + j] = v;
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Row-major sequential sum.
    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        dot(&self.data, &other.data)
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn same_shape(&self, other: &Self, what: &'static str) -> Result<()> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                what,
                expected: self.shape(),
                got: other.shape(),
            })
        }
    }
}

/// Per-pixel 2-vector field: components interleaved as (x, y) per pixel,
/// where x is the column (width) direction and y the row direction.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// Per-pixel 2x2 tensor field, components interleaved as (xx, xy, yx, yy).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

macro_rules! component_field {
    ($name:ident, $ncomp:expr) => {
        impl $name {
            pub const COMPONENTS: usize = $ncomp;

            pub fn zeros(height: usize, width: usize) -> Self {
                assert!(height > 0 && width > 0, "empty grid");
                Self {
                    height,
                    width,
                    data: vec![0.0; $ncomp * height * width],
                }
            }

            pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
                if height == 0 || width == 0 || data.len() != $ncomp * height * width {
                    return Err(Error::InvalidParameter(format!(
                        "{} {}x{} needs {} entries, got {}",
                        stringify!($name),
                        height,
                        width,
                        $ncomp * height * width,
                        data.len()
                    )));
                }
                if !data.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite(stringify!($name)));
                }
                Ok(Self {
                    height,
                    width,
                    data,
                })
            }

            #[inline]
            pub fn height(&self) -> usize {
                self.height
            }

            #[inline]
            pub fn width(&self) -> usize {
                self.width
            }

            #[inline]
            pub fn shape(&self) -> (usize, usize) {
                (self.height, self.width)
            }

            /// Components of pixel (i, j).
            #[inline]
            pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
                let k = $ncomp * (i * self.width + j);
                &self.data[k..k + $ncomp]
            }

            #[inline]
            pub fn pixel_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
                let k = $ncomp * (i * self.width + j);
                &mut self.data[k..k + $ncomp]
            }

            /// Euclidean / Frobenius norm of pixel (i, j).
            #[inline]
            pub fn pixel_norm(&self, i: usize, j: usize) -> f64 {
                self.pixel(i, j).iter().map(|v| v * v).sum::<f64>().sqrt()
            }

            #[inline]
            pub fn as_slice(&self) -> &[f64] {
                &self.data
            }

            #[inline]
            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.data
            }

            pub fn dot(&self, other: &Self) -> f64 {
                debug_assert_eq!(self.shape(), other.shape());
                dot(&self.data, &other.data)
            }

            pub fn norm2(&self) -> f64 {
                self.dot(self).sqrt()
            }

            pub fn check_finite(&self, what: &'static str) -> Result<()> {
                if self.data.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::NonFinite(what))
                }
            }
        }
    };
}

component_field!(VectorField, 2);
component_field!(TensorField, 4);

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Spatially varying Huber parameter: a nonnegative scalar field.
///
/// Entries below [`GAMMA_MIN`] are interpreted as exactly zero (pure TV
/// branch) by every consumer.
#[derive(Debug, Clone)]
pub struct HuberField {
    gamma: ScalarField,
}

impl HuberField {
    pub fn new(gamma: ScalarField) -> Result<Self> {
        if gamma.as_slice().iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "Huber parameter must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { gamma })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(ScalarField::constant(height, width, value))
    }

    #[inline]
    pub fn field(&self) -> &ScalarField {
        &self.gamma
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma.get(i, j)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.gamma.shape()
    }

    pub fn into_field(self) -> ScalarField {
        self.gamma
    }
}
