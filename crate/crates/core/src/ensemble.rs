//! Problem definition for the non-central correlated Wishart ensemble
//! `W = (xi^{1/2} A + B)(xi^{1/2} A + B)^dagger / T`.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricEigen};

/// Relative asymmetry of `xi` below which the input is silently symmetrized.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Dyson index of the sampled ensemble. Only enters Monte-Carlo sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Beta {
    Real = 1,
    Complex = 2,
}

impl Beta {
    pub fn value(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Beta {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Beta::Real),
            2 => Ok(Beta::Complex),
            4 => Err(Error::Unsupported(
                "beta = 4 (symplectic) sampling is not supported".into(),
            )),
            other => Err(Error::Unsupported(format!("beta = {other}"))),
        }
    }
}

impl From<Beta> for u8 {
    fn from(b: Beta) -> u8 {
        b.value()
    }
}

/// Full problem statement: dimensions, variance scale, Dyson index,
/// row-correlation matrix `xi` (N x N) and mean matrix `b` (N x T).
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub n: usize,
    pub t: usize,
    pub sigma2: f64,
    pub beta: Beta,
    pub xi: Mat<f64>,
    pub b: Mat<f64>,
}

impl PartialEq for EnsembleSpec {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.t == other.t
            && self.sigma2 == other.sigma2
            && self.beta == other.beta
            && self.xi == other.xi
            && self.b == other.b
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl EnsembleSpec {
    /// Builds a spec and validates it. `xi` is symmetrized when its relative
    /// asymmetry is below [`SYMMETRY_TOL`].
    pub fn new(n: usize, t: usize, sigma2: f64, beta: Beta, xi: Mat<f64>, b: Mat<f64>) -> Result<Self> {
        let mut spec = EnsembleSpec {
            n,
            t,
            sigma2,
            beta,
            xi,
            b,
        };
        let report = validate_spec(&spec);
        if !report.is_ok() {
            return Err(Error::InvalidSpec(report.violations));
        }
        spec.xi = symmetrized(&spec.xi);
        Ok(spec)
    }

    /// Uncorrelated, zero-mean ensemble (Marchenko-Pastur case).
    pub fn identity(n: usize, t: usize, sigma2: f64) -> Result<Self> {
        Self::new(n, t, sigma2, Beta::Real, Mat::identity(n, n), Mat::zeros(n, t))
    }

    pub fn kappa(&self) -> f64 {
        self.n as f64 / self.t as f64
    }

    pub fn with_beta(mut self, beta: Beta) -> Self {
        self.beta = beta;
        self
    }

    pub fn has_mean(&self) -> bool {
        (0..self.t).any(|c| (0..self.n).any(|r| self.b[(r, c)] != 0.0))
    }

    pub fn xi_is_identity(&self) -> bool {
        (0..self.n).all(|c| (0..self.n).all(|r| self.xi[(r, c)] == if r == c { 1.0 } else { 0.0 }))
    }
}

fn symmetrized(m: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

fn relative_asymmetry(m: &Mat<f64>) -> f64 {
    let mut diff = 0.0f64;
    let mut norm = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            diff = diff.max((m[(i, j)] - m[(j, i)]).abs());
            norm = norm.max(m[(i, j)].abs());
        }
    }
    if norm == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

/// Checks every invariant of [`EnsembleSpec`] and collects the violations.
pub fn validate_spec(spec: &EnsembleSpec) -> ValidationReport {
    let mut violations = Vec::new();
    if spec.n == 0 {
        violations.push("n must be positive".to_string());
    }
    if spec.t == 0 {
        violations.push("t must be positive".to_string());
    }
    if spec.n > spec.t {
        violations.push("t >= n required".to_string());
    }
    if !(spec.sigma2 > 0.0 && spec.sigma2.is_finite()) {
        violations.push("sigma2 must be positive".to_string());
    }
    if spec.xi.nrows() != spec.n || spec.xi.ncols() != spec.n {
        violations.push(format!(
            "xi must be {}x{}, got {}x{}",
            spec.n,
            spec.n,
            spec.xi.nrows(),
            spec.xi.ncols()
        ));
    }
    if spec.b.nrows() != spec.n || spec.b.ncols() != spec.t {
        violations.push(format!(
            "b must be {}x{}, got {}x{}",
            spec.n,
            spec.t,
            spec.b.nrows(),
            spec.b.ncols()
        ));
    }
    let finite = |m: &Mat<f64>| (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()));
    if !finite(&spec.xi) || !finite(&spec.b) {
        violations.push("matrix entries must be finite".to_string());
        return ValidationReport { violations };
    }
    if spec.xi.nrows() == spec.xi.ncols() && spec.xi.nrows() > 0 {
        let asym = relative_asymmetry(&spec.xi);
        if asym >= SYMMETRY_TOL {
            violations.push(format!("xi not symmetric (relative asymmetry {asym:e})"));
        } else {
            match linalg::sym_eigen(&symmetrized(&spec.xi)) {
                Ok(eig) => {
                    if eig.eigenvalues[0] <= 0.0 {
                        violations.push("xi not positive definite".to_string());
                    }
                }
                Err(_) => violations.push("xi eigendecomposition failed".to_string()),
            }
        }
    }
    ValidationReport { violations }
}

/// Quantities derived from the mean and correlation matrices.
///
/// `eta = B^T B / T` is never formed: its nonzero spectrum equals that of
/// `zeta`, and only that spectrum is used.
#[derive(Debug, Clone)]
pub struct DerivedMatrices {
    pub zeta: Mat<f64>,
    pub xi_sqrt: Mat<f64>,
    pub xi_eigen: SymmetricEigen,
}

pub fn derive_matrices(spec: &EnsembleSpec) -> Result<DerivedMatrices> {
    let xi_eigen = linalg::sym_eigen(&spec.xi)?;
    let min = xi_eigen.eigenvalues[0];
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    let v = &xi_eigen.eigenvectors;
    let scaled = Mat::from_fn(spec.n, spec.n, |i, j| v[(i, j)] * xi_eigen.eigenvalues[j].sqrt());
    let xi_sqrt = symmetrized(&(&scaled * v.transpose()));
    let zeta = gram_rows(&spec.b, spec.t as f64);
    Ok(DerivedMatrices {
        zeta,
        xi_sqrt,
        xi_eigen,
    })
}

/// `b b^T / scale`, symmetric by construction.
pub(crate) fn gram_rows(b: &Mat<f64>, scale: f64) -> Mat<f64> {
    let g = b * b.transpose();
    let n = g.nrows();
    Mat::from_fn(n, n, |i, j| {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        g[(lo, hi)] / scale
    })
}

/// Spectral evaluation point `z = lambda + i epsilon` (upper half-plane).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationPoint {
    pub lambda: f64,
    pub epsilon: f64,
}

impl EvaluationPoint {
    pub fn new(lambda: f64, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!(
                "evaluation point needs finite lambda and epsilon > 0 (got {lambda}, {epsilon})"
            )));
        }
        Ok(EvaluationPoint { lambda, epsilon })
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.lambda, self.epsilon)
    }
}
