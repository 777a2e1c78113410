//! Sparse linear algebra backend.
//!
//! Assembly happens in triplet form; direct solves go through faer's sparse
//! LU / Cholesky, iterative solves through the Krylov routines below. Tests
//! can densify small systems via [`TripletMatrix::to_dense`].

use crate::error::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};

/// Square or rectangular sparse matrix in triplet (COO) form.
/// Duplicate entries are summed when the matrix is used.
#[derive(Debug, Clone)]
pub struct TripletMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn extend(&mut self, trips: impl IntoIterator<Item = (usize, usize, f64)>) {
        for (r, c, v) in trips {
            self.push(r, c, v);
        }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn transposed(&self) -> Self {
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            entries: self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect(),
        }
    }

    /// Row-major dense copy; intended for desk-scale tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.nrows * self.ncols];
        for &(r, c, v) in &self.entries {
            dense[r * self.ncols + c] += v;
        }
        dense
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// Summed diagonal (zero where absent).
    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.nrows.min(self.ncols);
        let mut d = vec![0.0; n];
        for &(r, c, v) in &self.entries {
            if r == c {
                d[r] += v;
            }
        }
        d
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trips: Vec<Triplet<usize, usize, f64>> = self
            .entries
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips).map_err(|e| {
            Error::SingularSystem {
                what: "sparse assembly",
                detail: format!("{e:?}"),
            }
        })
    }
}

/// Owned sparse LU factorization; solves with the matrix and its transpose.
pub struct LuFactor {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl LuFactor {
    pub fn new(mat: &TripletMatrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::InvalidParameter(format!(
                "LU needs a square matrix, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let sp = mat.to_faer()?;
        let lu = sp.sp_lu().map_err(|e| Error::SingularSystem {
            what: "sparse LU",
            detail: format!("{e:?}"),
        })?;
        Ok(Self { lu, n: mat.nrows() })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let b = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve_transpose(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Owned sparse Cholesky factorization for SPD systems.
pub struct LltFactor {
    llt: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl LltFactor {
    pub fn new(mat: &TripletMatrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::InvalidParameter(format!(
                "Cholesky needs a square matrix, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let sp = mat.to_faer()?;
        let llt = sp
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| Error::SingularSystem {
                what: "sparse Cholesky",
                detail: format!("{e:?}"),
            })?;
        Ok(Self { llt, n: mat.nrows() })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.llt.solve(&b);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Direct solve of an SPD system.
pub fn solve_spd(mat: &TripletMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    Ok(LltFactor::new(mat)?.solve(rhs))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradients for SPD operators.
pub fn cg(
    matvec: impl Fn(&[f64]) -> Vec<f64>,
    diag: &[f64],
    rhs: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = rhs.len();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let bnorm = norm(rhs).max(f64::MIN_POSITIVE);
    if norm(&r) <= tol * bnorm {
        return Ok((x, 0));
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iters {
        let ap = matvec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SingularSystem {
                what: "cg",
                detail: format!("non-positive curvature {pap:.3e} at iteration {it}"),
            });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if norm(&r) <= tol * bnorm {
            return Ok((x, it));
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::NonConvergence {
        what: "cg",
        iters: max_iters,
        residual: norm(&r) / bnorm,
    })
}

/// Jacobi-preconditioned BiCGSTAB for general square operators.
pub fn bicgstab(
    matvec: impl Fn(&[f64]) -> Vec<f64>,
    diag: &[f64],
    rhs: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<(Vec<f64>, usize)> {
    let n = rhs.len();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d.abs() > 1e-300 { 1.0 / d } else { 1.0 })
        .collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&inv_diag).map(|(a, d)| a * d).collect() };

    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let bnorm = norm(rhs).max(f64::MIN_POSITIVE);
    if norm(&r) <= tol * bnorm {
        return Ok((x, 0));
    }
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for it in 1..=max_iters {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 {
            return Err(Error::SingularSystem {
                what: "bicgstab",
                detail: format!("rho breakdown at iteration {it}"),
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        let p_hat = precond(&p);
        v = matvec(&p_hat);
        let rhv = dot(&r_hat, &v);
        if rhv.abs() < 1e-300 {
            return Err(Error::SingularSystem {
                what: "bicgstab",
                detail: format!("orthogonality breakdown at iteration {it}"),
            });
        }
        alpha = rho / rhv;
        let s: Vec<f64> = (0..n).map(|k| r[k] - alpha * v[k]).collect();
        if norm(&s) <= tol * bnorm {
            for k in 0..n {
                x[k] += alpha * p_hat[k];
            }
            return Ok((x, it));
        }
        let s_hat = precond(&s);
        let t = matvec(&s_hat);
        let tt = dot(&t, &t);
        if tt < 1e-300 {
            return Err(Error::SingularSystem {
                what: "bicgstab",
                detail: format!("stagnation at iteration {it}"),
            });
        }
        omega = dot(&t, &s) / tt;
        for k in 0..n {
            x[k] += alpha * p_hat[k] + omega * s_hat[k];
            r[k] = s[k] - omega * t[k];
        }
        if norm(&r) <= tol * bnorm {
            return Ok((x, it));
        }
    }
    Err(Error::NonConvergence {
        what: "bicgstab",
        iters: max_iters,
        residual: norm(&r) / bnorm,
    })
}
