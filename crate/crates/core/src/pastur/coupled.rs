use faer::Mat;
use num_complex::Complex64;

use super::newton::{self, Evaluation, FixedPointSystem};
use super::{alpha1, alpha2, ResolventState, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, traces_from_products, ComplexLu, SymmetricEigen};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Relative off-diagonal size of `zeta` (in the eigenbasis of `xi`) below
/// which the two matrices are treated as commuting.
const DIAGONAL_TOL: f64 = 1e-13;

/// The coupled pair `g = <M^{-1}>`, `g_xi = <xi M^{-1}>` with
/// `M = z - alpha1(g) xi - alpha2(g_xi) zeta`, held in the eigenbasis of `xi`
/// so that `xi` is diagonal.
#[derive(Debug, Clone)]
pub struct CoupledSystem {
    d: Vec<f64>,
    zeta: Mat<f64>,
    zeta_diag: Option<Vec<f64>>,
    sigma2: f64,
    kappa: f64,
    dense_only: bool,
}

impl CoupledSystem {
    pub fn new(xi: &Mat<f64>, zeta: &Mat<f64>, sigma2: f64, kappa: f64) -> Result<Self> {
        let n = xi.nrows();
        if xi.ncols() != n || zeta.nrows() != n || zeta.ncols() != n || n == 0 {
            return Err(Error::DimensionMismatch(format!(
                "xi is {}x{}, zeta is {}x{}",
                xi.nrows(),
                xi.ncols(),
                zeta.nrows(),
                zeta.ncols()
            )));
        }
        let eig = linalg::sym_eigen(xi)?;
        Self::from_eigen(&eig, zeta, sigma2, kappa)
    }

    pub fn from_eigen(xi_eigen: &SymmetricEigen, zeta: &Mat<f64>, sigma2: f64, kappa: f64) -> Result<Self> {
        let n = xi_eigen.dim();
        if zeta.nrows() != n || zeta.ncols() != n {
            return Err(Error::DimensionMismatch(format!("zeta must be {n}x{n}")));
        }
        if !(sigma2 >= 0.0) || !(kappa > 0.0 && kappa <= 1.0) {
            return Err(Error::Config(format!(
                "need sigma2 >= 0 and kappa in (0, 1], got {sigma2}, {kappa}"
            )));
        }
        let min = xi_eigen.eigenvalues[0];
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        let rotated = xi_eigen.to_basis(zeta);
        let zeta = Mat::from_fn(n, n, |i, j| 0.5 * (rotated[(i, j)] + rotated[(j, i)]));
        let norm = zeta.norm_l2();
        let mut off = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    off += zeta[(i, j)] * zeta[(i, j)];
                }
            }
        }
        let zeta_diag = (off.sqrt() <= DIAGONAL_TOL * norm).then(|| (0..n).map(|i| zeta[(i, i)]).collect());
        Ok(CoupledSystem {
            d: xi_eigen.eigenvalues.clone(),
            zeta,
            zeta_diag,
            sigma2,
            kappa,
            dense_only: false,
        })
    }

    /// Disables the commuting shortcut so every evaluation goes through the
    /// dense factorization.
    pub fn dense_only(mut self) -> Self {
        self.dense_only = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// True when `xi` and `zeta` share an eigenbasis.
    pub fn is_commuting(&self) -> bool {
        self.zeta_diag.is_some()
    }

    /// Right-hand sides `(f1, f2)` and their analytic Jacobian with respect
    /// to `(g, g_xi)`.
    pub fn evaluate(
        &self,
        z: Complex64,
        g: Complex64,
        g_xi: Complex64,
    ) -> Result<([Complex64; 2], [[Complex64; 2]; 2])> {
        let e = self.eval_inner(z, [g, g_xi])?;
        Ok((e.f, e.jac))
    }

    /// Central finite-difference Jacobian with real step `h`.
    pub fn finite_difference_jacobian(
        &self,
        z: Complex64,
        g: Complex64,
        g_xi: Complex64,
        h: f64,
    ) -> Result<[[Complex64; 2]; 2]> {
        let mut jac = [[ZERO; 2]; 2];
        for col in 0..2 {
            let mut xp = [g, g_xi];
            let mut xm = [g, g_xi];
            xp[col] += h;
            xm[col] -= h;
            let fp = self.eval_inner(z, xp)?.f;
            let fm = self.eval_inner(z, xm)?.f;
            for row in 0..2 {
                jac[row][col] = (fp[row] - fm[row]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    fn eval_inner(&self, z: Complex64, x: [Complex64; 2]) -> Result<Evaluation> {
        let a1 = alpha1(z, x[0], self.sigma2, self.kappa);
        let a2 = alpha2(x[1], self.sigma2, self.kappa);
        if !(a2.re.is_finite() && a2.im.is_finite()) {
            return Err(Error::Singular {
                pivot: 0.0,
                scale: f64::INFINITY,
            });
        }
        let da1 = self.sigma2 * self.kappa * z;
        let da2 = self.sigma2 * self.kappa * a2 * a2;
        match (&self.zeta_diag, self.dense_only) {
            (Some(s), false) => self.eval_diagonal(z, a1, a2, da1, da2, s),
            _ => self.eval_dense(z, a1, a2, da1, da2),
        }
    }

    fn eval_diagonal(
        &self,
        z: Complex64,
        a1: Complex64,
        a2: Complex64,
        da1: Complex64,
        da2: Complex64,
        s: &[f64],
    ) -> Result<Evaluation> {
        let inv_n = 1.0 / self.d.len() as f64;
        let mut f = [ZERO; 2];
        let mut t = [ZERO; 4];
        for (&dj, &sj) in self.d.iter().zip(s) {
            let m = z - a1 * dj - a2 * sj;
            if m.norm() == 0.0 {
                return Err(Error::Singular {
                    pivot: 0.0,
                    scale: z.norm(),
                });
            }
            let r = 1.0 / m;
            let r2 = r * r;
            f[0] += r;
            f[1] += dj * r;
            t[0] += dj * r2;
            t[1] += sj * r2;
            t[2] += dj * dj * r2;
            t[3] += dj * sj * r2;
        }
        Ok(Evaluation {
            f: [f[0] * inv_n, f[1] * inv_n],
            jac: [
                [da1 * t[0] * inv_n, da2 * t[1] * inv_n],
                [da1 * t[2] * inv_n, da2 * t[3] * inv_n],
            ],
        })
    }

    fn eval_dense(
        &self,
        z: Complex64,
        a1: Complex64,
        a2: Complex64,
        da1: Complex64,
        da2: Complex64,
    ) -> Result<Evaluation> {
        let n = self.d.len();
        let m = Mat::from_fn(n, n, |i, j| {
            let off = -a2 * self.zeta[(i, j)];
            if i == j {
                off + z - a1 * self.d[i]
            } else {
                off
            }
        });
        let r = ComplexLu::new(&m)?.inverse();
        let xr = Mat::from_fn(n, n, |i, j| self.d[i] * r[(i, j)]);
        // zeta R from M R = I, avoiding a second product
        let inv_a2 = 1.0 / a2;
        let zr = Mat::from_fn(n, n, |i, j| {
            let mut v = z * r[(i, j)] - a1 * xr[(i, j)];
            if i == j {
                v -= 1.0;
            }
            v * inv_a2
        });
        let tr = traces_from_products(&r, &xr, &zr);
        Ok(Evaluation {
            f: [tr.g, tr.g_xi],
            jac: [[da1 * tr.t_x, da2 * tr.t_z], [da1 * tr.t_xx, da2 * tr.t_xz]],
        })
    }

    fn mean_xi(&self) -> f64 {
        self.d.iter().sum::<f64>() / self.d.len() as f64
    }

    fn mean_zeta(&self) -> f64 {
        (0..self.dim()).map(|i| self.zeta[(i, i)]).sum::<f64>() / self.dim() as f64
    }

    /// Solves at `z`, optionally warm-started from `(g, g_xi)`.
    pub fn solve(
        &self,
        z: Complex64,
        cfg: &SolverConfig,
        warm: Option<(Complex64, Complex64)>,
    ) -> Result<ResolventState> {
        if !(z.im > 0.0) {
            return Err(Error::Config(format!("need Im z > 0, got {z}")));
        }
        let sol = newton::solve(self, z, warm.map(|(g, h)| [g, h]), cfg)?;
        Ok(ResolventState::new(
            z,
            sol.x[0],
            sol.x[1],
            self.sigma2,
            self.kappa,
            sol.iterations,
            sol.residual,
        ))
    }
}

impl FixedPointSystem for CoupledSystem {
    fn unknowns(&self) -> usize {
        2
    }

    fn eval(&self, z: Complex64, x: [Complex64; 2]) -> Result<Evaluation> {
        self.eval_inner(z, x)
    }

    fn initial_guess(&self, z: Complex64) -> [Complex64; 2] {
        [1.0 / z, self.mean_xi() / z]
    }

    fn spectral_scale(&self) -> f64 {
        self.sigma2 * self.mean_xi() + self.mean_zeta()
    }
}

/// Solves the coupled nc-CWE Pastur equations at `z`.
pub fn solve_pastur_nccwe(
    z: Complex64,
    xi: &Mat<f64>,
    zeta: &Mat<f64>,
    sigma2: f64,
    kappa: f64,
    cfg: &SolverConfig,
    warm: Option<(Complex64, Complex64)>,
) -> Result<ResolventState> {
    CoupledSystem::new(xi, zeta, sigma2, kappa)?.solve(z, cfg, warm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pastur::{solve_pastur_cwe, solve_pastur_ncwe};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> Mat<f64> {
        Mat::from_fn(v.len(), v.len(), |i, j| if i == j { v[i] } else { 0.0 })
    }

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
        let a = Mat::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        let s = &a + a.transpose();
        linalg::sym_eigen(&s).unwrap().eigenvectors
    }

    fn random_psd(n: usize, rank: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
        let b = Mat::from_fn(n, rank, |_, _| rng.random::<f64>() - 0.5);
        &b * b.transpose()
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
        let q = random_orthogonal(n, rng);
        let d: Vec<f64> = (0..n).map(|_| 0.5 + 1.5 * rng.random::<f64>()).collect();
        let s = Mat::from_fn(n, n, |i, j| q[(i, j)] * d[j]);
        let m = &s * q.transpose();
        Mat::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
    }

    #[test]
    fn identity_xi_matches_ncwe() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zeta = random_psd(12, 3, &mut rng);
        let zeta_eigs = linalg::sym_eigenvalues(&zeta).unwrap();
        let cfg = SolverConfig::default();
        for i in 0..15 {
            let z = Complex64::new(0.05 + 0.3 * i as f64, 1e-6);
            let a = solve_pastur_nccwe(z, &Mat::identity(12, 12), &zeta, 1.0, 0.5, &cfg, None).unwrap();
            let b = solve_pastur_ncwe(z, &zeta_eigs, 1.0, 0.5, &cfg, None).unwrap();
            assert!((a.g - b.g).norm() < 1e-10, "{z}: {} vs {}", a.g, b.g);
            assert!((a.g - a.g_xi).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_zeta_matches_cwe() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xi = random_spd(10, &mut rng);
        let eigs = linalg::sym_eigenvalues(&xi).unwrap();
        let cfg = SolverConfig::default();
        for i in 0..15 {
            let z = Complex64::new(0.05 + 0.35 * i as f64, 1e-6);
            let a = solve_pastur_nccwe(z, &xi, &Mat::zeros(10, 10), 1.0, 0.4, &cfg, None).unwrap();
            let b = solve_pastur_cwe(z, &eigs, 1.0, 0.4, &cfg, None).unwrap();
            assert!((a.g - b.g).norm() < 1e-10, "{z}");
            assert!((a.g_xi - b.g_xi).norm() < 1e-10, "{z}");
        }
    }

    #[test]
    fn dense_and_diagonal_paths_agree() {
        let xi = diag(&[0.6, 0.9, 1.2, 1.8, 2.0]);
        let zeta = diag(&[0.0, 0.3, 0.0, 1.1, 0.4]);
        let fast = CoupledSystem::new(&xi, &zeta, 0.7, 0.5).unwrap();
        assert!(fast.is_commuting());
        let dense = fast.clone().dense_only();
        let z = Complex64::new(1.3, 0.02);
        let g = Complex64::new(0.2, -0.5);
        let h = Complex64::new(0.3, -0.4);
        let (f1, j1) = fast.evaluate(z, g, h).unwrap();
        let (f2, j2) = dense.evaluate(z, g, h).unwrap();
        for i in 0..2 {
            assert!((f1[i] - f2[i]).norm() < 1e-13);
            for j in 0..2 {
                assert!((j1[i][j] - j2[i][j]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn analytic_jacobian_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xi = random_spd(8, &mut rng);
        let zeta = random_psd(8, 2, &mut rng);
        let sys = CoupledSystem::new(&xi, &zeta, 1.0, 0.5).unwrap();
        assert!(!sys.is_commuting());
        for _ in 0..10 {
            let z = Complex64::new(4.0 * rng.random::<f64>(), 0.05 + rng.random::<f64>());
            let g = Complex64::new(rng.random::<f64>() - 0.5, -0.1 - rng.random::<f64>());
            let h = Complex64::new(rng.random::<f64>() - 0.5, -0.1 - rng.random::<f64>());
            let (_, an) = sys.evaluate(z, g, h).unwrap();
            let fd = sys.finite_difference_jacobian(z, g, h, 1e-7).unwrap();
            let scale = an.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
            for i in 0..2 {
                for j in 0..2 {
                    assert!(
                        (an[i][j] - fd[i][j]).norm() < 1e-6 * scale,
                        "{i}{j}: {} vs {}",
                        an[i][j],
                        fd[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn converged_state_is_on_branch_with_small_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xi = random_spd(10, &mut rng);
        let zeta = random_psd(10, 3, &mut rng);
        let sys = CoupledSystem::new(&xi, &zeta, 1.0, 0.5).unwrap();
        let cfg = SolverConfig::default();
        let mut warm = None;
        for i in (0..40).rev() {
            let z = Complex64::new(0.02 + 0.1 * i as f64, 1e-6);
            let s = sys.solve(z, &cfg, warm).unwrap();
            assert!(s.g.im < 0.0);
            let (f, _) = sys.evaluate(z, s.g, s.g_xi).unwrap();
            assert!((f[0] - s.g).norm() < 1e-10 && (f[1] - s.g_xi).norm() < 1e-10);
            warm = Some((s.g, s.g_xi));
        }
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let r = CoupledSystem::new(&Mat::identity(3, 3), &Mat::zeros(4, 4), 1.0, 0.5);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }
}
