//! Ensemble-averaged positions of eigenvalues separated from the bulk.
//!
//! Indices `k` are 1-based into the ascending spectrum, so `k = N` is the
//! largest eigenvalue.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::ensemble::{derive_matrices, EnsembleSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricEigen};
use crate::pastur::Variant;

/// Relative gap below which an eigenvalue is not separated.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Relative size of `xi zeta - zeta xi` (or of the off-diagonal part of
/// `zeta` in a supplied basis) below which the two are taken to commute.
pub const COMMUTING_TOL: f64 = 1e-10;

/// Candidates examined by [`predict_outliers`], counted from the top.
const MAX_CANDIDATES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierPrediction {
    pub k: usize,
    pub lambda_bar: f64,
    pub valid: bool,
    pub threshold_lhs: f64,
    pub threshold_rhs: f64,
    pub method: String,
}

impl OutlierPrediction {
    fn new(k: usize, lambda_bar: f64, lhs: f64, rhs: f64, method: &str) -> Self {
        OutlierPrediction {
            k,
            lambda_bar,
            valid: lhs > rhs,
            threshold_lhs: lhs,
            threshold_rhs: rhs,
            method: method.to_string(),
        }
    }
}

/// Equal cross-correlation `xi_jk = delta_jk + (1 - delta_jk) mu0^2`, exact
/// finite-N form. Valid iff `N mu0^2 > sqrt(kappa)`. At `mu0^2 = 0` there is
/// no separated state and the bulk edge is reported.
pub fn outlier_cwe_equal_cross(n: usize, mu0_sq: f64, sigma2: f64, kappa: f64) -> OutlierPrediction {
    let nf = n as f64;
    let lhs = nf * mu0_sq;
    let lambda_bar = if mu0_sq > 0.0 {
        sigma2 * ((nf - 1.0) * mu0_sq + 1.0) * ((nf - kappa) * mu0_sq + kappa) / lhs
    } else {
        sigma2 * (1.0 + kappa.sqrt()).powi(2)
    };
    OutlierPrediction::new(n, lambda_bar, lhs, kappa.sqrt(), "cwe_equal_cross")
}

/// Large-N simplification `sigma^2 (N mu0^2 + 1)(N mu0^2 + kappa) / (N mu0^2)`.
pub fn outlier_cwe_equal_cross_large_n(n: usize, mu0_sq: f64, sigma2: f64, kappa: f64) -> OutlierPrediction {
    let x = n as f64 * mu0_sq;
    let lambda_bar = if mu0_sq > 0.0 {
        sigma2 * (x + 1.0) * (x + kappa) / x
    } else {
        sigma2 * (1.0 + kappa.sqrt()).powi(2)
    };
    OutlierPrediction::new(n, lambda_bar, x, kappa.sqrt(), "cwe_equal_cross_large_n")
}

fn check_index(k: usize, n: usize) -> Result<usize> {
    if k == 0 || k > n {
        return Err(Error::Config(format!("outlier index {k} outside 1..={n}")));
    }
    Ok(k - 1)
}

fn check_separated(eigs: &[f64], idx: usize) -> Result<()> {
    let l = eigs[idx];
    let scale = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let gap = eigs
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != idx)
        .map(|(_, v)| (l - v).abs())
        .fold(f64::INFINITY, f64::min);
    if gap <= DEGENERACY_TOL * scale {
        return Err(Error::DegenerateEigenvalue { k: idx + 1, gap });
    }
    Ok(())
}

/// k'th separated eigenvalue of a CWE from the spectrum of `xi`:
/// `sigma^2 l (1 - kappa + kappa l Phi)`, `Phi = (1/N) sum_{j != k} 1/(l - l_j)`.
/// Valid iff the prediction increases with `l`.
pub fn outlier_cwe_general(xi_eigen: &SymmetricEigen, k: usize, sigma2: f64, kappa: f64) -> Result<OutlierPrediction> {
    let eigs = &xi_eigen.eigenvalues;
    let idx = check_index(k, eigs.len())?;
    check_separated(eigs, idx)?;
    let l = eigs[idx];
    let inv_n = 1.0 / eigs.len() as f64;
    let (mut phi, mut dphi) = (0.0, 0.0);
    for (j, &lj) in eigs.iter().enumerate() {
        if j != idx {
            let d = l - lj;
            phi += 1.0 / d;
            dphi -= 1.0 / (d * d);
        }
    }
    phi *= inv_n;
    dphi *= inv_n;
    let lambda_bar = sigma2 * l * (1.0 - kappa + kappa * l * phi);
    let slope = sigma2 * (1.0 - kappa) + sigma2 * kappa * (2.0 * l * phi + l * l * dphi);
    Ok(OutlierPrediction::new(k, lambda_bar, slope, 0.0, "cwe_general"))
}

/// Rank-1 mean `B_jv = mu` (`zeta` eigenvalue `N mu^2`):
/// `(N mu^2 + sigma^2)(N mu^2 + sigma^2 kappa) / (N mu^2)`, valid iff
/// `N mu^2 > sqrt(kappa) sigma^2`.
pub fn outlier_ncwe_rank1(n: usize, mu_sq: f64, sigma2: f64, kappa: f64) -> OutlierPrediction {
    let x = n as f64 * mu_sq;
    let lambda_bar = if mu_sq > 0.0 {
        (x + sigma2) * (x + sigma2 * kappa) / x
    } else {
        sigma2 * (1.0 + kappa.sqrt()).powi(2)
    };
    OutlierPrediction::new(n, lambda_bar, x, kappa.sqrt() * sigma2, "ncwe_rank1")
}

/// k'th separated eigenvalue of an nc-WE from the spectrum of `zeta`:
/// `(1 + sigma^2 kappa Phi)[sigma^2 (1 - kappa) + s (1 + sigma^2 kappa Phi)]`.
/// Valid iff the prediction increases with `s`.
pub fn outlier_ncwe(zeta_eigen: &SymmetricEigen, k: usize, sigma2: f64, kappa: f64) -> Result<OutlierPrediction> {
    let eigs = &zeta_eigen.eigenvalues;
    let idx = check_index(k, eigs.len())?;
    check_separated(eigs, idx)?;
    let s = eigs[idx];
    let (phi, dphi) = phi_sums(eigs, idx);
    let c = sigma2 * kappa;
    let u = 1.0 + c * phi;
    let du = c * dphi;
    let lambda_bar = u * (sigma2 * (1.0 - kappa) + s * u);
    let slope = du * sigma2 * (1.0 - kappa) + u * u + 2.0 * s * u * du;
    Ok(OutlierPrediction::new(k, lambda_bar, slope, 0.0, "ncwe_general"))
}

/// `Phi_k = (1/N) sum_{j != k} 1/(s - s_j)` and its derivative in `s`.
fn phi_sums(eigs: &[f64], idx: usize) -> (f64, f64) {
    let s = eigs[idx];
    let inv_n = 1.0 / eigs.len() as f64;
    let (mut phi, mut dphi) = (0.0, 0.0);
    for (j, &sj) in eigs.iter().enumerate() {
        if j != idx {
            let d = s - sj;
            phi += 1.0 / d;
            dphi -= 1.0 / (d * d);
        }
    }
    (phi * inv_n, dphi * inv_n)
}

/// Pole condition of the nc-WE resolvent at a separated eigenvalue, with
/// `g0 = Phi / (1 + sigma^2 kappa Phi)`; returns `rhs - lambda`.
pub fn ncwe_pole_residual(lambda: f64, zeta_eigs: &[f64], k: usize, sigma2: f64, kappa: f64) -> Result<f64> {
    let idx = check_index(k, zeta_eigs.len())?;
    let (phi, _) = phi_sums(zeta_eigs, idx);
    let c = sigma2 * kappa;
    let g0 = phi / (1.0 + c * phi);
    let rhs = sigma2 * (1.0 - kappa + lambda * kappa * g0) + zeta_eigs[idx] / (1.0 - c * g0);
    Ok(rhs - lambda)
}

/// Equal cross-correlation `xi` plus rank-1 `zeta` with
/// `Delta^2 = mu0^2 sigma^2 + mu^2`:
/// `(N Delta^2 + sigma^2)(N Delta^2 + sigma^2 kappa) / (N Delta^2)`,
/// valid iff `N Delta^2 > sqrt(kappa)`.
pub fn outlier_nccwe_equal_cross_rank1(
    n: usize,
    mu0_sq: f64,
    mu_sq: f64,
    sigma2: f64,
    kappa: f64,
) -> OutlierPrediction {
    let x = n as f64 * (mu0_sq * sigma2 + mu_sq);
    let lambda_bar = if x > 0.0 {
        (x + sigma2) * (x + sigma2 * kappa) / x
    } else {
        sigma2 * (1.0 + kappa.sqrt()).powi(2)
    };
    OutlierPrediction::new(n, lambda_bar, x, kappa.sqrt(), "nccwe_equal_cross_rank1")
}

/// k'th separated eigenvalue of an nc-CWE with commuting `xi`, `zeta`:
/// `(1 + sigma^2 kappa Psi)(sigma^2 l + s)` with
/// `Psi = (1/N) sum_{j != k} xi_j / (sigma^2 (l - xi_j) + s)`.
///
/// `zeta_in_xi_basis` must be diagonal to within [`COMMUTING_TOL`]. The
/// prediction depends on `(l, s)` only through `E = sigma^2 l + s`; it is
/// valid iff it increases with `E`.
pub fn outlier_nccwe(
    xi_eigen: &SymmetricEigen,
    zeta_in_xi_basis: &Mat<f64>,
    k: usize,
    sigma2: f64,
    kappa: f64,
) -> Result<OutlierPrediction> {
    let n = xi_eigen.dim();
    if zeta_in_xi_basis.nrows() != n || zeta_in_xi_basis.ncols() != n {
        return Err(Error::DimensionMismatch(format!("zeta must be {n}x{n}")));
    }
    let off = off_diagonal_norm(zeta_in_xi_basis);
    if off > COMMUTING_TOL * zeta_in_xi_basis.norm_l2().max(f64::MIN_POSITIVE) {
        return Err(Error::NonCommuting { off_diagonal: off });
    }
    let idx = check_index(k, n)?;
    let xi = &xi_eigen.eigenvalues;
    let e = sigma2 * xi[idx] + zeta_in_xi_basis[(idx, idx)];
    let inv_n = 1.0 / n as f64;
    let (mut psi, mut dpsi) = (0.0, 0.0);
    let mut gap = f64::INFINITY;
    for (j, &xj) in xi.iter().enumerate() {
        if j != idx {
            let d = e - sigma2 * xj;
            gap = gap.min(d.abs());
            psi += xj / d;
            dpsi -= xj / (d * d);
        }
    }
    if gap <= DEGENERACY_TOL * e.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateEigenvalue { k, gap });
    }
    psi *= inv_n;
    dpsi *= inv_n;
    let c = sigma2 * kappa;
    let lambda_bar = (1.0 + c * psi) * e;
    let slope = 1.0 + c * psi + c * e * dpsi;
    Ok(OutlierPrediction::new(k, lambda_bar, slope, 0.0, "nccwe_psi"))
}

fn off_diagonal_norm(m: &Mat<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                acc += m[(i, j)] * m[(i, j)];
            }
        }
    }
    acc.sqrt()
}

/// True when `||xi zeta - zeta xi||_F < COMMUTING_TOL ||xi|| ||zeta||`.
pub fn commutes(xi: &Mat<f64>, zeta: &Mat<f64>) -> bool {
    let scale = xi.norm_l2() * zeta.norm_l2();
    scale == 0.0 || linalg::commutator_norm(xi, zeta) < COMMUTING_TOL * scale
}

/// A basis diagonalizing both `xi` and `zeta`, ordered by ascending `xi`
/// eigenvalue (ties by `zeta`). Returns the eigen-pair of `xi` in that basis
/// together with `zeta` expressed in it.
pub fn common_eigenbasis(xi: &Mat<f64>, zeta: &Mat<f64>) -> Result<(SymmetricEigen, Mat<f64>)> {
    if !commutes(xi, zeta) {
        let scale = xi.norm_l2() * zeta.norm_l2();
        return Err(Error::NonCommuting {
            off_diagonal: linalg::commutator_norm(xi, zeta) / scale,
        });
    }
    let zn = zeta.norm_l2();
    // an irrational-looking weight keeps accidental degeneracies of xi + c zeta unlikely
    let c = if zn > 0.0 {
        0.754_877_666_246_692_8 * xi.norm_l2() / zn
    } else {
        0.0
    };
    let combo = xi + zeta * faer::Scale(c);
    let v = linalg::sym_eigen(&combo)?.eigenvectors;
    let xi_b = v.transpose() * xi * &v;
    let zeta_b = v.transpose() * zeta * &v;
    let n = xi.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        xi_b[(a, a)]
            .total_cmp(&xi_b[(b, b)])
            .then(zeta_b[(a, a)].total_cmp(&zeta_b[(b, b)]))
    });
    let vs = Mat::from_fn(n, n, |i, j| v[(i, order[j])]);
    let eigenvalues = order.iter().map(|&a| xi_b[(a, a)]).collect();
    let zeta_sorted = Mat::from_fn(n, n, |i, j| zeta_b[(order[i], order[j])]);
    Ok((
        SymmetricEigen {
            eigenvalues,
            eigenvectors: vs,
        },
        zeta_sorted,
    ))
}

/// Analytic predictions for the top non-degenerate eigenvalues of the
/// matrix that drives the separation (`xi`, `zeta`, or both), up to
/// eight candidates. Fails with `NonCommuting` for nc-CWE input whose
/// `xi` and `zeta` do not commute.
pub fn predict_outliers(spec: &EnsembleSpec, variant: Variant) -> Result<Vec<OutlierPrediction>> {
    let derived = derive_matrices(spec)?;
    let (sigma2, kappa) = (spec.sigma2, spec.kappa());
    let n = spec.n;
    let mut out = Vec::new();
    match variant {
        Variant::Cwe => {
            for k in (1..=n).rev().take(MAX_CANDIDATES) {
                match outlier_cwe_general(&derived.xi_eigen, k, sigma2, kappa) {
                    Ok(p) => out.push(p),
                    Err(Error::DegenerateEigenvalue { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Variant::Ncwe => {
            let zeta_eigen = linalg::sym_eigen(&derived.zeta)?;
            for k in (1..=n).rev().take(MAX_CANDIDATES) {
                match outlier_ncwe(&zeta_eigen, k, sigma2, kappa) {
                    Ok(p) => out.push(p),
                    Err(Error::DegenerateEigenvalue { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
        Variant::Nccwe => {
            let (xi_eigen, zeta_b) = common_eigenbasis(&spec.xi, &derived.zeta)?;
            let mut ks: Vec<usize> = (1..=n).collect();
            ks.sort_by(|&a, &b| {
                let ea = sigma2 * xi_eigen.eigenvalues[a - 1] + zeta_b[(a - 1, a - 1)];
                let eb = sigma2 * xi_eigen.eigenvalues[b - 1] + zeta_b[(b - 1, b - 1)];
                eb.total_cmp(&ea)
            });
            for k in ks.into_iter().take(MAX_CANDIDATES) {
                match outlier_nccwe(&xi_eigen, &zeta_b, k, sigma2, kappa) {
                    Ok(p) => out.push(p),
                    Err(Error::DegenerateEigenvalue { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(out)
}
