use num_complex::Complex64;

use super::SolverConfig;
use crate::error::{Error, Result};

/// Right-hand side `f(x)` of a fixed-point system `x = f(x)` with its
/// Jacobian `df/dx`. Only the first `unknowns()` components are active.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Evaluation {
    pub f: [Complex64; 2],
    pub jac: [[Complex64; 2]; 2],
}

pub(crate) trait FixedPointSystem {
    fn unknowns(&self) -> usize;
    fn eval(&self, z: Complex64, x: [Complex64; 2]) -> Result<Evaluation>;
    fn initial_guess(&self, z: Complex64) -> [Complex64; 2];
    /// Typical magnitude of the spectrum; starting height of the homotopy.
    fn spectral_scale(&self) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Solution {
    pub x: [Complex64; 2],
    pub iterations: usize,
    pub residual: f64,
}

const MAX_HALVINGS: usize = 20;
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn residual(sys: &dyn FixedPointSystem, x: &[Complex64; 2], e: &Evaluation) -> ([Complex64; 2], f64) {
    let mut r = [ZERO; 2];
    let mut norm = 0.0;
    for i in 0..sys.unknowns() {
        r[i] = e.f[i] - x[i];
        norm += r[i].norm_sqr();
    }
    (r, norm.sqrt())
}

/// Newton direction `d` solving `(J - I) d = r`; the update is `x - d`.
fn newton_direction(n: usize, e: &Evaluation, r: &[Complex64; 2]) -> Option<[Complex64; 2]> {
    let one = Complex64::new(1.0, 0.0);
    let d = if n == 1 {
        [r[0] / (e.jac[0][0] - one), ZERO]
    } else {
        let a = e.jac[0][0] - one;
        let b = e.jac[0][1];
        let c = e.jac[1][0];
        let dd = e.jac[1][1] - one;
        let det = a * dd - b * c;
        [(dd * r[0] - b * r[1]) / det, (a * r[1] - c * r[0]) / det]
    };
    d.iter().all(|v| v.re.is_finite() && v.im.is_finite()).then_some(d)
}

fn on_branch(n: usize, x: &[Complex64; 2]) -> bool {
    (0..n).all(|i| x[i].im < 0.0 && x[i].re.is_finite() && x[i].im.is_finite())
}

fn sub_scaled(x: &[Complex64; 2], d: &[Complex64; 2], s: f64) -> [Complex64; 2] {
    [x[0] - d[0] * s, x[1] - d[1] * s]
}

/// Damped Newton with backtracking on the residual norm and enforcement of
/// the physical branch `Im x < 0`. Falls back to a damped fixed-point step
/// when no Newton step is acceptable.
pub(crate) fn newton(
    sys: &dyn FixedPointSystem,
    z: Complex64,
    start: [Complex64; 2],
    cfg: &SolverConfig,
) -> Result<Solution> {
    let n = sys.unknowns();
    let mut x = start;
    if !on_branch(n, &x) {
        x = sys.initial_guess(z);
    }
    let mut e = sys.eval(z, x)?;
    let (mut r, mut rn) = residual(sys, &x, &e);
    let fail = |x: [Complex64; 2], rn: f64, it: usize| Error::NoConvergence {
        last: x[0],
        last_xi: x[1],
        residual: rn,
        iterations: it,
    };

    for it in 0..cfg.max_iter {
        let dir = newton_direction(n, &e, &r);
        if rn <= cfg.tol {
            // converged: the final Newton step costs nothing extra and lands
            // at residual ~ rn^2
            if let Some(d) = dir {
                let polished = sub_scaled(&x, &d, 1.0);
                if on_branch(n, &polished) {
                    return Ok(Solution {
                        x: polished,
                        iterations: it + 1,
                        residual: rn,
                    });
                }
            }
            return Ok(Solution {
                x,
                iterations: it,
                residual: rn,
            });
        }

        let mut accepted = false;
        if let Some(d) = dir {
            let mut s = cfg.damping;
            for _ in 0..=MAX_HALVINGS {
                let cand = sub_scaled(&x, &d, s);
                if on_branch(n, &cand) {
                    match sys.eval(z, cand) {
                        Ok(ec) => {
                            let (rc, rcn) = residual(sys, &cand, &ec);
                            if rcn < rn {
                                x = cand;
                                e = ec;
                                r = rc;
                                rn = rcn;
                                accepted = true;
                                break;
                            }
                        }
                        Err(Error::Singular { .. }) => {}
                        Err(other) => return Err(other),
                    }
                }
                s *= 0.5;
            }
        }

        if !accepted {
            let mut cand = x;
            for i in 0..n {
                cand[i] = x[i] + 0.5 * r[i];
            }
            if !on_branch(n, &cand) {
                return Err(fail(x, rn, it + 1));
            }
            x = cand;
            e = sys.eval(z, x)?;
            let (rr, rrn) = residual(sys, &x, &e);
            r = rr;
            rn = rrn;
        }
    }
    Err(fail(x, rn, cfg.max_iter))
}

/// Approaches `Im z = epsilon` from above: solves first at a height of the
/// order of the spectral scale, then lowers the height tenfold per stage,
/// warm-starting each stage. Stays on the physical branch throughout.
pub(crate) fn homotopy(sys: &dyn FixedPointSystem, z: Complex64, cfg: &SolverConfig) -> Result<Solution> {
    let target = z.im;
    let mut height = sys.spectral_scale().max(target).max(1e-3);
    let mut x = sys.initial_guess(Complex64::new(z.re, height));
    let mut total = 0;
    loop {
        let zz = Complex64::new(z.re, height);
        let sol = newton(sys, zz, x, cfg)?;
        total += sol.iterations;
        x = sol.x;
        if height <= target {
            return Ok(Solution {
                iterations: total,
                ..sol
            });
        }
        height = (height / 10.0).max(target);
    }
}

/// Warm-started Newton, falling back to the homotopy on failure.
pub(crate) fn solve(
    sys: &dyn FixedPointSystem,
    z: Complex64,
    warm: Option<[Complex64; 2]>,
    cfg: &SolverConfig,
) -> Result<Solution> {
    let start = warm.unwrap_or_else(|| sys.initial_guess(z));
    match newton(sys, z, start, cfg) {
        Ok(s) => Ok(s),
        Err(first) => match homotopy(sys, z, cfg) {
            Ok(s) => Ok(s),
            Err(_) => Err(first),
        },
    }
}
