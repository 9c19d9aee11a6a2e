//! Dense kernels: symmetric eigendecomposition, complex LU solves and the
//! normalized resolvent traces consumed by the coupled nc-CWE solver.

use faer::linalg::solvers::{DenseSolveCore, PartialPivLu, Solve};
use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = Mat<Complex64>;

/// Relative pivot size below which a complex matrix is declared singular.
pub const SINGULAR_TOL: f64 = 1e-14;

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Mat<f64>,
}

impl SymmetricEigen {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(lambda) V^T`.
    pub fn reconstruct(&self) -> Mat<f64> {
        let v = &self.eigenvectors;
        let scaled = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * self.eigenvalues[j]);
        &scaled * v.transpose()
    }

    /// Expresses `m` in this eigenbasis: `V^T m V`.
    pub fn to_basis(&self, m: &Mat<f64>) -> Mat<f64> {
        self.eigenvectors.transpose() * m * &self.eigenvectors
    }
}

pub fn sym_eigen(m: &Mat<f64>) -> Result<SymmetricEigen> {
    check_square(m.nrows(), m.ncols())?;
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenNoConvergence)?;
    let eigenvalues = (0..m.nrows()).map(|i| evd.S()[i]).collect();
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors: evd.U().to_owned(),
    })
}

/// Eigenvalues only (ascending), real symmetric input.
pub fn sym_eigenvalues(m: &Mat<f64>) -> Result<Vec<f64>> {
    check_square(m.nrows(), m.ncols())?;
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::EigenNoConvergence)
}

/// Eigenvalues only (ascending), complex Hermitian input.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    check_square(m.nrows(), m.ncols())?;
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::EigenNoConvergence)
}

fn check_square(r: usize, c: usize) -> Result<()> {
    if r != c {
        return Err(Error::DimensionMismatch(format!("expected square matrix, got {r}x{c}")));
    }
    Ok(())
}

pub fn to_complex(m: &Mat<f64>) -> ComplexMatrix {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| Complex64::new(m[(i, j)], 0.0))
}

fn max_row_norm(m: &ComplexMatrix) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorization with partial pivoting, rejected when a pivot falls
/// below `SINGULAR_TOL` times the largest row norm.
pub struct ComplexLu {
    lu: PartialPivLu<Complex64>,
    n: usize,
}

impl ComplexLu {
    pub fn new(m: &ComplexMatrix) -> Result<Self> {
        check_square(m.nrows(), m.ncols())?;
        let n = m.nrows();
        let scale = max_row_norm(m);
        if !scale.is_finite() {
            return Err(Error::Singular { pivot: f64::NAN, scale });
        }
        let lu = m.partial_piv_lu();
        let u = lu.U();
        let pivot = (0..n).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
        if n > 0 && (scale == 0.0 || pivot < SINGULAR_TOL * scale) {
            return Err(Error::Singular { pivot, scale });
        }
        Ok(ComplexLu { lu, n })
    }

    pub fn solve(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if rhs.nrows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "rhs has {} rows, matrix is {}x{}",
                rhs.nrows(),
                self.n,
                self.n
            )));
        }
        Ok(self.lu.solve(rhs))
    }

    pub fn inverse(&self) -> ComplexMatrix {
        self.lu.inverse()
    }
}

/// Solves `m x = rhs`.
pub fn solve_complex(m: &ComplexMatrix, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
    ComplexLu::new(m)?.solve(rhs)
}

/// Normalized traces `<.>_N = tr(.)/N` of the resolvent-like inverse
/// `R = M^{-1}` against the fixed matrices `xi` and `zeta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventTraces {
    /// `<R>`
    pub g: Complex64,
    /// `<xi R>`
    pub g_xi: Complex64,
    /// `<R xi R>`
    pub t_x: Complex64,
    /// `<R zeta R>`
    pub t_z: Complex64,
    /// `<xi R xi R>`
    pub t_xx: Complex64,
    /// `<xi R zeta R>`
    pub t_xz: Complex64,
    /// `<zeta R xi R>`
    pub t_zx: Complex64,
    /// `<zeta R zeta R>`
    pub t_zz: Complex64,
}

/// `sum_{i,k} a_ik b_ki`, i.e. `tr(a b)`.
pub(crate) fn trace_of_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..a.ncols() {
        for i in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

fn trace(a: &ComplexMatrix) -> Complex64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}

pub(crate) fn traces_from_products(r: &ComplexMatrix, xr: &ComplexMatrix, zr: &ComplexMatrix) -> ResolventTraces {
    let inv_n = 1.0 / r.nrows() as f64;
    ResolventTraces {
        g: trace(r) * inv_n,
        g_xi: trace(xr) * inv_n,
        t_x: trace_of_product(xr, r) * inv_n,
        t_z: trace_of_product(zr, r) * inv_n,
        t_xx: trace_of_product(xr, xr) * inv_n,
        t_xz: trace_of_product(xr, zr) * inv_n,
        t_zx: trace_of_product(zr, xr) * inv_n,
        t_zz: trace_of_product(zr, zr) * inv_n,
    }
}

/// All traces from a single factorization of `m`.
pub fn resolvent_traces(m: &ComplexMatrix, xi: &Mat<f64>, zeta: &Mat<f64>) -> Result<ResolventTraces> {
    let n = m.nrows();
    if xi.nrows() != n || xi.ncols() != n || zeta.nrows() != n || zeta.ncols() != n {
        return Err(Error::DimensionMismatch("xi, zeta and m must share dimension".into()));
    }
    let r = ComplexLu::new(m)?.inverse();
    let xr = to_complex(xi) * &r;
    let zr = to_complex(zeta) * &r;
    Ok(traces_from_products(&r, &xr, &zr))
}

/// Frobenius norm of `a b - b a`.
pub fn commutator_norm(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    (a * b - b * a).norm_l2()
}
