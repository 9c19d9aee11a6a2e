//! Newton solvers for the self-consistent (Pastur) equations of the central
//! correlated (CWE), non-central uncorrelated (nc-WE) and non-central
//! correlated (nc-CWE) Wishart ensembles, plus density-curve evaluation.
//!
//! All three equations share the form
//! `g = < L [z - alpha1(z, g) xi - alpha2(g_xi) zeta]^{-1} >_N` with
//! `alpha1 = sigma^2 (1 - kappa + kappa z g)` and
//! `alpha2 = 1 / (1 - sigma^2 kappa g_xi)`.

mod coupled;
mod curve;
mod newton;
mod scalar;

pub use coupled::{solve_pastur_nccwe, CoupledSystem};
pub use curve::{
    bulk_edge_of, bulk_mass_threshold, bulk_upper_edge, density_curve, density_curve_parallel, support_upper_bound,
    DensityCurve, PreparedEnsemble, SupportComponent, Variant, SUPPORT_TOL,
};
pub use scalar::{solve_pastur_cwe, solve_pastur_ncwe};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub epsilon: f64,
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-12,
            max_iter: 200,
            epsilon: 1e-6,
            damping: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.tol > 0.0) {
            return Err("solver.tol must be positive".into());
        }
        if self.max_iter < 1 {
            return Err("solver.max_iter must be >= 1".into());
        }
        if !(self.epsilon > 0.0) {
            return Err("solver.epsilon must be positive".into());
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err("solver.damping must lie in (0, 1]".into());
        }
        Ok(())
    }
}

/// Converged resolvent pair at `z`, with the derived coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventState {
    pub z: Complex64,
    pub g: Complex64,
    pub g_xi: Complex64,
    pub alpha1: Complex64,
    pub alpha2: Complex64,
    pub iterations: usize,
    pub residual: f64,
}

impl ResolventState {
    pub(crate) fn new(
        z: Complex64,
        g: Complex64,
        g_xi: Complex64,
        sigma2: f64,
        kappa: f64,
        iterations: usize,
        residual: f64,
    ) -> Self {
        ResolventState {
            z,
            g,
            g_xi,
            alpha1: alpha1(z, g, sigma2, kappa),
            alpha2: alpha2(g_xi, sigma2, kappa),
            iterations,
            residual,
        }
    }
}

pub fn alpha1(z: Complex64, g: Complex64, sigma2: f64, kappa: f64) -> Complex64 {
    sigma2 * (1.0 - kappa + kappa * z * g)
}

pub fn alpha2(g_xi: Complex64, sigma2: f64, kappa: f64) -> Complex64 {
    1.0 / (1.0 - sigma2 * kappa * g_xi)
}

/// Spectral density `-Im g / pi`; tiny negative round-off is clamped to zero.
pub fn density_from_resolvent(state: &ResolventState) -> f64 {
    density_from_g(state.g)
}

pub(crate) fn density_from_g(g: Complex64) -> f64 {
    let rho = -g.im / PI;
    if rho < 0.0 && rho > -1e-12 {
        0.0
    } else {
        rho
    }
}
