use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coupled::CoupledSystem;
use super::scalar::{solve_cwe_system, solve_ncwe_system, CweSystem, NcweSystem};
use super::{density_from_g, ResolventState, SolverConfig};
use crate::ensemble::{derive_matrices, EnsembleSpec};
use crate::error::{Error, Result};
use crate::linalg;

/// Density below which a point counts as outside the support.
pub const SUPPORT_TOL: f64 = 1e-6;

/// Number of independent chunks in [`density_curve_parallel`]; fixed so the
/// output does not depend on the thread count.
const PARALLEL_CHUNKS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Cwe,
    Ncwe,
    Nccwe,
}

impl Variant {
    /// Picks the least general equation that covers `spec`.
    pub fn resolve(spec: &EnsembleSpec) -> Variant {
        match (spec.has_mean(), spec.xi_is_identity()) {
            (true, false) => Variant::Nccwe,
            (true, true) => Variant::Ncwe,
            (false, _) => Variant::Cwe,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cwe => "cwe",
            Variant::Ncwe => "ncwe",
            Variant::Nccwe => "nccwe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub rho: Vec<f64>,
    pub epsilon: f64,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    pub g: Vec<Complex64>,
    pub g_xi: Vec<Complex64>,
    pub warnings: Vec<String>,
}

impl DensityCurve {
    pub fn failures(&self) -> usize {
        self.converged.iter().filter(|c| !**c).count()
    }

    /// Trapezoid integral of `w(lambda) rho(lambda)` over `[lo, hi]`.
    pub fn integrate(&self, lo: f64, hi: f64, w: impl Fn(f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.grid.len() {
            let (a, b) = (self.grid[i - 1], self.grid[i]);
            if b <= lo || a >= hi {
                continue;
            }
            acc += 0.5 * (b - a) * (w(a) * self.rho[i - 1] + w(b) * self.rho[i]);
        }
        acc
    }

    /// Linear interpolation; zero outside the grid.
    pub fn interpolate(&self, lambda: f64) -> f64 {
        let g = &self.grid;
        if g.is_empty() || lambda < g[0] || lambda > g[g.len() - 1] {
            return 0.0;
        }
        let i = g.partition_point(|&x| x < lambda);
        if i == 0 {
            return self.rho[0];
        }
        let (a, b) = (g[i - 1], g[i]);
        let t = (lambda - a) / (b - a);
        self.rho[i - 1] * (1.0 - t) + self.rho[i] * t
    }
}

/// One connected interval of the limiting spectrum with its mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportComponent {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

#[derive(Debug, Clone)]
enum System {
    Cwe(CweSystem),
    Ncwe(NcweSystem),
    Nccwe(CoupledSystem),
}

/// An ensemble reduced to what a given Pastur equation needs: eigenvalues
/// for the scalar equations, the rotated `zeta` for the coupled one.
#[derive(Debug, Clone)]
pub struct PreparedEnsemble {
    variant: Variant,
    n: usize,
    sigma2: f64,
    kappa: f64,
    xi_max: f64,
    zeta_max: f64,
    moment: f64,
    system: System,
}

impl PreparedEnsemble {
    pub fn new(spec: &EnsembleSpec, variant: Variant) -> Result<Self> {
        let derived = derive_matrices(spec)?;
        let (sigma2, kappa) = (spec.sigma2, spec.kappa());
        let xi_eigs = &derived.xi_eigen.eigenvalues;
        let zeta_eigs = linalg::sym_eigenvalues(&derived.zeta)?;
        let n = spec.n as f64;
        let moment = sigma2 * xi_eigs.iter().sum::<f64>() / n + zeta_eigs.iter().sum::<f64>() / n;
        let system = match variant {
            Variant::Cwe => {
                if spec.has_mean() {
                    return Err(Error::Config("variant cwe requires a zero mean matrix".into()));
                }
                System::Cwe(CweSystem::new(xi_eigs, sigma2, kappa))
            }
            Variant::Ncwe => {
                if !spec.xi_is_identity() {
                    return Err(Error::Config("variant ncwe requires xi = identity".into()));
                }
                System::Ncwe(NcweSystem::new(&zeta_eigs, sigma2, kappa))
            }
            Variant::Nccwe => System::Nccwe(CoupledSystem::from_eigen(
                &derived.xi_eigen,
                &derived.zeta,
                sigma2,
                kappa,
            )?),
        };
        Ok(PreparedEnsemble {
            variant,
            n: spec.n,
            sigma2,
            kappa,
            xi_max: xi_eigs[xi_eigs.len() - 1],
            zeta_max: zeta_eigs[zeta_eigs.len() - 1].max(0.0),
            moment,
            system,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `<sigma^2 xi + zeta>_N`, the mean eigenvalue.
    pub fn first_moment(&self) -> f64 {
        self.moment
    }

    pub fn solve(
        &self,
        z: Complex64,
        cfg: &SolverConfig,
        warm: Option<(Complex64, Complex64)>,
    ) -> Result<ResolventState> {
        match &self.system {
            System::Cwe(s) => solve_cwe_system(s, z, cfg, warm.map(|w| w.0)),
            System::Ncwe(s) => solve_ncwe_system(s, z, cfg, warm.map(|w| w.0)),
            System::Nccwe(s) => s.solve(z, cfg, warm),
        }
    }

    /// Upper bound on the whole spectrum, outliers included.
    pub fn support_upper_bound(&self) -> f64 {
        let s = (self.sigma2 * self.xi_max).sqrt() * (1.0 + self.kappa.sqrt()) + self.zeta_max.sqrt();
        1.1 * s * s
    }

    /// Density at each grid point, swept from the top of the grid down with
    /// each solution warm-starting the next.
    pub fn curve(&self, grid: &[f64], cfg: &SolverConfig) -> Result<DensityCurve> {
        check_grid(grid)?;
        let mut curve = self.sweep(grid, cfg);
        fill_failures(&mut curve);
        Ok(curve)
    }

    /// Like [`curve`](Self::curve) but splits the grid into chunks that are
    /// solved concurrently, each from a cold start.
    pub fn curve_parallel(&self, grid: &[f64], cfg: &SolverConfig) -> Result<DensityCurve> {
        check_grid(grid)?;
        let size = grid.len().div_ceil(PARALLEL_CHUNKS).max(1);
        let parts: Vec<DensityCurve> = grid.par_chunks(size).map(|c| self.sweep(c, cfg)).collect();
        let mut curve = DensityCurve {
            grid: Vec::with_capacity(grid.len()),
            rho: Vec::with_capacity(grid.len()),
            epsilon: cfg.epsilon,
            iterations: Vec::with_capacity(grid.len()),
            converged: Vec::with_capacity(grid.len()),
            g: Vec::with_capacity(grid.len()),
            g_xi: Vec::with_capacity(grid.len()),
            warnings: Vec::new(),
        };
        for p in parts {
            curve.grid.extend(p.grid);
            curve.rho.extend(p.rho);
            curve.iterations.extend(p.iterations);
            curve.converged.extend(p.converged);
            curve.g.extend(p.g);
            curve.g_xi.extend(p.g_xi);
        }
        fill_failures(&mut curve);
        Ok(curve)
    }

    fn sweep(&self, grid: &[f64], cfg: &SolverConfig) -> DensityCurve {
        let m = grid.len();
        let mut rho = vec![0.0; m];
        let mut iterations = vec![0; m];
        let mut converged = vec![false; m];
        let mut g = vec![Complex64::new(0.0, 0.0); m];
        let mut g_xi = g.clone();
        // last two solutions, most recent first, for a linear predictor
        let mut history: Vec<(f64, Complex64, Complex64)> = Vec::with_capacity(2);
        for i in (0..m).rev() {
            let z = Complex64::new(grid[i], cfg.epsilon);
            let warm = predict(&history, grid[i]);
            let result = match self.solve(z, cfg, warm) {
                Err(_) if history.len() == 2 => self.solve(z, cfg, Some((history[0].1, history[0].2))),
                r => r,
            };
            match result {
                Ok(s) => {
                    rho[i] = density_from_g(s.g).max(0.0);
                    iterations[i] = s.iterations;
                    converged[i] = true;
                    g[i] = s.g;
                    g_xi[i] = s.g_xi;
                    history.insert(0, (grid[i], s.g, s.g_xi));
                    history.truncate(2);
                }
                Err(e) => {
                    if let Error::NoConvergence { iterations: it, .. } = e {
                        iterations[i] = it;
                    }
                    history.clear();
                }
            }
        }
        DensityCurve {
            grid: grid.to_vec(),
            rho,
            epsilon: cfg.epsilon,
            iterations,
            converged,
            g,
            g_xi,
            warnings: Vec::new(),
        }
    }

    fn density_at(
        &self,
        lambda: f64,
        cfg: &SolverConfig,
        warm: Option<(Complex64, Complex64)>,
    ) -> Result<(f64, ResolventState)> {
        let s = self.solve(Complex64::new(lambda, cfg.epsilon), cfg, warm)?;
        Ok((density_from_g(s.g).max(0.0), s))
    }

    /// Connected support intervals, located on a uniform grid of `points`
    /// over `(0, support_upper_bound]` and bisected at both ends. Components
    /// spanning fewer than `refine` grid points are resampled on a local grid
    /// of `refine` points for their mass.
    pub fn support_components(
        &self,
        cfg: &SolverConfig,
        points: usize,
        refine: usize,
    ) -> Result<Vec<SupportComponent>> {
        let top = self.support_upper_bound();
        let h = top / points as f64;
        let grid: Vec<f64> = (1..=points).map(|i| i as f64 * h).collect();
        let coarse = self.curve(&grid, cfg)?;
        let inside: Vec<bool> = coarse.rho.iter().map(|&r| r > SUPPORT_TOL).collect();

        let mut runs = Vec::new();
        let mut i = 0;
        while i < points {
            if inside[i] {
                let start = i;
                while i + 1 < points && inside[i + 1] {
                    i += 1;
                }
                runs.push((start, i));
            }
            i += 1;
        }

        let mut out = Vec::new();
        for (a, b) in runs {
            // the grid starts at h, so a run at index 0 may reach down to 0
            let lo_out = if a == 0 { 0.0 } else { grid[a - 1] };
            let hi_out = if b + 1 < points { grid[b + 1] } else { top };
            let warm_at = |i: usize| coarse.converged[i].then(|| (coarse.g[i], coarse.g_xi[i]));
            let lo = if a == 0 {
                0.0
            } else {
                self.bisect_edge(lo_out, grid[a], cfg, warm_at(a))?
            };
            let hi = self.bisect_edge(hi_out, grid[b], cfg, warm_at(b))?;
            let (local, rho) = if b + 1 - a >= refine {
                (grid[a..=b].to_vec(), coarse.rho[a..=b].to_vec())
            } else {
                let local: Vec<f64> = (0..refine)
                    .map(|k| lo + (hi - lo) * (k as f64 + 0.5) / refine as f64)
                    .collect();
                let rho = self.curve(&local, cfg)?.rho;
                (local, rho)
            };
            let mut nodes = vec![lo];
            nodes.extend(&local);
            nodes.push(hi);
            let mut vals = vec![0.0];
            vals.extend(&rho);
            vals.push(0.0);
            let mass = (1..nodes.len())
                .map(|k| 0.5 * (nodes[k] - nodes[k - 1]) * (vals[k] + vals[k - 1]))
                .sum();
            out.push(SupportComponent { lo, hi, mass });
        }
        Ok(out)
    }

    /// Boundary between `outside` (density ~ 0) and `inside`, to a relative
    /// precision of about 1e-7, warm-starting each probe from the last
    /// solution found.
    fn bisect_edge(
        &self,
        mut outside: f64,
        mut inside: f64,
        cfg: &SolverConfig,
        mut warm: Option<(Complex64, Complex64)>,
    ) -> Result<f64> {
        for _ in 0..40 {
            if (inside - outside).abs() <= 1e-7 * inside.abs().max(1.0) {
                break;
            }
            let mid = 0.5 * (outside + inside);
            let (rho, s) = match self.density_at(mid, cfg, warm) {
                Ok(v) => v,
                Err(_) => self.density_at(mid, cfg, None)?,
            };
            warm = Some((s.g, s.g_xi));
            if rho > SUPPORT_TOL {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok(0.5 * (outside + inside))
    }

    /// Upper edge of the bulk: the highest support component carrying more
    /// mass than a handful of separated eigenvalues could.
    pub fn bulk_upper_edge(&self, cfg: &SolverConfig) -> Result<f64> {
        let comps = self.support_components(cfg, 200, 64)?;
        bulk_edge_of(&comps, self.n).ok_or(Error::EmptyOverlap)
    }
}

/// Components with mass above `max(3/N, 0.01)` are bulk.
pub fn bulk_mass_threshold(n: usize) -> f64 {
    (3.0 / n as f64).max(0.01)
}

pub fn bulk_edge_of(components: &[SupportComponent], n: usize) -> Option<f64> {
    let thr = bulk_mass_threshold(n);
    components
        .iter()
        .filter(|c| c.mass > thr)
        .map(|c| c.hi)
        .fold(None, |m, h| {
            Some(match m {
                Some(v) if v > h => v,
                _ => h,
            })
        })
}

/// Linear extrapolation from the two previous solutions, falling back to
/// the most recent one when the extrapolant leaves the physical branch.
fn predict(history: &[(f64, Complex64, Complex64)], x: f64) -> Option<(Complex64, Complex64)> {
    match history {
        [] => None,
        [(_, g, h)] => Some((*g, *h)),
        [(x1, g1, h1), (x2, g2, h2), ..] => {
            let t = (x - x1) / (x1 - x2);
            let g = g1 + (g1 - g2) * t;
            let h = h1 + (h1 - h2) * t;
            if g.im < 0.0 && h.im < 0.0 {
                Some((g, h))
            } else {
                Some((*g1, *h1))
            }
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config("grid values must be finite".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("grid must be strictly ascending".into()));
    }
    Ok(())
}

/// Replaces the density at non-converged points by linear interpolation
/// between the nearest converged neighbours.
fn fill_failures(curve: &mut DensityCurve) {
    let failed: Vec<usize> = (0..curve.grid.len()).filter(|&i| !curve.converged[i]).collect();
    if failed.is_empty() {
        return;
    }
    let ok: Vec<usize> = (0..curve.grid.len()).filter(|&i| curve.converged[i]).collect();
    for &i in &failed {
        let x = curve.grid[i];
        let left = ok.iter().rev().find(|&&j| j < i).copied();
        let right = ok.iter().find(|&&j| j > i).copied();
        curve.rho[i] = match (left, right) {
            (Some(l), Some(r)) => {
                let t = (x - curve.grid[l]) / (curve.grid[r] - curve.grid[l]);
                curve.rho[l] * (1.0 - t) + curve.rho[r] * t
            }
            (Some(j), None) | (None, Some(j)) => curve.rho[j],
            (None, None) => 0.0,
        };
        curve.warnings.push(format!(
            "no convergence at lambda = {x}; density interpolated from neighbours"
        ));
    }
}

pub fn density_curve(spec: &EnsembleSpec, variant: Variant, grid: &[f64], cfg: &SolverConfig) -> Result<DensityCurve> {
    PreparedEnsemble::new(spec, variant)?.curve(grid, cfg)
}

pub fn density_curve_parallel(
    spec: &EnsembleSpec,
    variant: Variant,
    grid: &[f64],
    cfg: &SolverConfig,
) -> Result<DensityCurve> {
    PreparedEnsemble::new(spec, variant)?.curve_parallel(grid, cfg)
}

pub fn support_upper_bound(spec: &EnsembleSpec, variant: Variant) -> Result<f64> {
    Ok(PreparedEnsemble::new(spec, variant)?.support_upper_bound())
}

pub fn bulk_upper_edge(spec: &EnsembleSpec, variant: Variant, cfg: &SolverConfig) -> Result<f64> {
    PreparedEnsemble::new(spec, variant)?.bulk_upper_edge(cfg)
}
