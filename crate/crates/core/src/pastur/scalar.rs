use num_complex::Complex64;

use super::newton::{self, Evaluation, FixedPointSystem};
use super::{alpha1, alpha2, ResolventState, SolverConfig};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Eigenvalues with multiplicity weights `count / N`; exact repeats merged.
fn weighted_spectrum(eigs: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = eigs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let w = 1.0 / eigs.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some((last, weight)) if *last == v => *weight += w,
            _ => out.push((v, w)),
        }
    }
    out
}

fn check_inputs(z: Complex64, eigs: &[f64], sigma2: f64, kappa: f64) -> Result<()> {
    if !(z.im > 0.0) {
        return Err(Error::Config(format!("need Im z > 0, got {z}")));
    }
    if eigs.is_empty() {
        return Err(Error::DimensionMismatch("empty spectrum".into()));
    }
    if !(sigma2 >= 0.0) || !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::Config(format!(
            "need sigma2 >= 0 and kappa in (0, 1], got {sigma2}, {kappa}"
        )));
    }
    Ok(())
}

/// `g = <[z - alpha1(g) xi]^{-1}>` over the spectrum of `xi`.
#[derive(Debug, Clone)]
pub(crate) struct CweSystem {
    spectrum: Vec<(f64, f64)>,
    sigma2: f64,
    kappa: f64,
}

impl CweSystem {
    pub(crate) fn new(xi_eigs: &[f64], sigma2: f64, kappa: f64) -> Self {
        CweSystem {
            spectrum: weighted_spectrum(xi_eigs),
            sigma2,
            kappa,
        }
    }

    fn g_xi(&self, z: Complex64, g: Complex64) -> Complex64 {
        let a1 = alpha1(z, g, self.sigma2, self.kappa);
        self.spectrum.iter().map(|&(l, w)| w * l / (z - a1 * l)).sum()
    }
}

impl FixedPointSystem for CweSystem {
    fn unknowns(&self) -> usize {
        1
    }

    fn eval(&self, z: Complex64, x: [Complex64; 2]) -> Result<Evaluation> {
        let a1 = alpha1(z, x[0], self.sigma2, self.kappa);
        let da1 = self.sigma2 * self.kappa * z;
        let mut f = ZERO;
        let mut df = ZERO;
        for &(l, w) in &self.spectrum {
            let r = 1.0 / (z - a1 * l);
            f += w * r;
            df += w * l * r * r;
        }
        Ok(Evaluation {
            f: [f, ZERO],
            jac: [[df * da1, ZERO], [ZERO, ZERO]],
        })
    }

    fn initial_guess(&self, z: Complex64) -> [Complex64; 2] {
        [1.0 / z, ZERO]
    }

    fn spectral_scale(&self) -> f64 {
        self.sigma2 * self.spectrum.iter().map(|&(l, w)| w * l).sum::<f64>()
    }
}

/// `g = <[(z - alpha1(g)) - alpha2(g) zeta]^{-1}>` over the spectrum of `zeta`.
#[derive(Debug, Clone)]
pub(crate) struct NcweSystem {
    spectrum: Vec<(f64, f64)>,
    sigma2: f64,
    kappa: f64,
}

impl NcweSystem {
    pub(crate) fn new(zeta_eigs: &[f64], sigma2: f64, kappa: f64) -> Self {
        NcweSystem {
            spectrum: weighted_spectrum(zeta_eigs),
            sigma2,
            kappa,
        }
    }
}

impl FixedPointSystem for NcweSystem {
    fn unknowns(&self) -> usize {
        1
    }

    fn eval(&self, z: Complex64, x: [Complex64; 2]) -> Result<Evaluation> {
        let g = x[0];
        let a1 = alpha1(z, g, self.sigma2, self.kappa);
        let a2 = alpha2(g, self.sigma2, self.kappa);
        let da1 = self.sigma2 * self.kappa * z;
        let da2 = self.sigma2 * self.kappa * a2 * a2;
        let mut f = ZERO;
        let mut df = ZERO;
        for &(s, w) in &self.spectrum {
            let r = 1.0 / (z - a1 - a2 * s);
            f += w * r;
            df += w * (da1 + da2 * s) * r * r;
        }
        Ok(Evaluation {
            f: [f, ZERO],
            jac: [[df, ZERO], [ZERO, ZERO]],
        })
    }

    fn initial_guess(&self, z: Complex64) -> [Complex64; 2] {
        [1.0 / z, ZERO]
    }

    fn spectral_scale(&self) -> f64 {
        self.sigma2 + self.spectrum.iter().map(|&(s, w)| w * s).sum::<f64>()
    }
}

/// Solves the CWE Pastur equation at `z` given the eigenvalues of `xi`.
pub fn solve_pastur_cwe(
    z: Complex64,
    xi_eigs: &[f64],
    sigma2: f64,
    kappa: f64,
    cfg: &SolverConfig,
    warm: Option<Complex64>,
) -> Result<ResolventState> {
    check_inputs(z, xi_eigs, sigma2, kappa)?;
    if xi_eigs.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: xi_eigs.iter().copied().fold(f64::INFINITY, f64::min),
        });
    }
    let sys = CweSystem::new(xi_eigs, sigma2, kappa);
    solve_cwe_system(&sys, z, cfg, warm)
}

pub(crate) fn solve_cwe_system(
    sys: &CweSystem,
    z: Complex64,
    cfg: &SolverConfig,
    warm: Option<Complex64>,
) -> Result<ResolventState> {
    let sol = newton::solve(sys, z, warm.map(|g| [g, ZERO]), cfg)?;
    let g = sol.x[0];
    Ok(ResolventState::new(
        z,
        g,
        sys.g_xi(z, g),
        sys.sigma2,
        sys.kappa,
        sol.iterations,
        sol.residual,
    ))
}

/// Solves the nc-WE Pastur equation at `z` given the eigenvalues of `zeta`.
pub fn solve_pastur_ncwe(
    z: Complex64,
    zeta_eigs: &[f64],
    sigma2: f64,
    kappa: f64,
    cfg: &SolverConfig,
    warm: Option<Complex64>,
) -> Result<ResolventState> {
    check_inputs(z, zeta_eigs, sigma2, kappa)?;
    if zeta_eigs.iter().any(|&s| !(s >= -1e-12)) {
        return Err(Error::Config("zeta eigenvalues must be non-negative".into()));
    }
    let sys = NcweSystem::new(zeta_eigs, sigma2, kappa);
    solve_ncwe_system(&sys, z, cfg, warm)
}

pub(crate) fn solve_ncwe_system(
    sys: &NcweSystem,
    z: Complex64,
    cfg: &SolverConfig,
    warm: Option<Complex64>,
) -> Result<ResolventState> {
    let sol = newton::solve(sys, z, warm.map(|g| [g, ZERO]), cfg)?;
    let g = sol.x[0];
    Ok(ResolventState::new(
        z,
        g,
        g,
        sys.sigma2,
        sys.kappa,
        sol.iterations,
        sol.residual,
    ))
}
