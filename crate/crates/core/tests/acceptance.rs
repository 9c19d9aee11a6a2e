//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use faer::Mat;
use ncwishart::closedform::{mp_resolvent, MpParams};
use ncwishart::ensemble::{Beta, EnsembleSpec};
use ncwishart::linalg::sym_eigen;
use ncwishart::montecarlo::{
    build_equal_cross_model, build_fig1_model, build_fig2_model, build_identity_model, run_comparison, sample_wishart,
    McConfig,
};
use ncwishart::outliers::{
    outlier_cwe_equal_cross, outlier_cwe_general, outlier_nccwe_equal_cross_rank1, outlier_ncwe, outlier_ncwe_rank1,
    predict_outliers,
};
use ncwishart::pastur::{
    bulk_mass_threshold, solve_pastur_cwe, solve_pastur_nccwe, solve_pastur_ncwe, CoupledSystem, DensityCurve,
    PreparedEnsemble, SolverConfig, Variant,
};
use ncwishart::{Error, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

const TRIALS: usize = 20;

fn mc(seed: u64) -> McConfig {
    McConfig {
        trials: TRIALS,
        seed,
        ..Default::default()
    }
}

fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn mp_reduction() -> Result<Outcome> {
    let cfg = SolverConfig::default();
    let grid = uniform_grid(0.01, 4.2, 200);
    let mut worst: f64 = 0.0;
    for kappa in [0.25, 0.5, 1.0] {
        let p = MpParams::new(1.0, kappa);
        let mut warm = None;
        for &l in grid.iter().rev() {
            let z = Complex64::new(l, 1e-6);
            let s = solve_pastur_cwe(z, &[1.0], 1.0, kappa, &cfg, warm)?;
            warm = Some(s.g);
            worst = worst.max((s.g - mp_resolvent(z, p)).norm());
        }
    }
    Ok(Outcome::new(
        worst < 1e-10,
        format!("max |dg| = {worst:.2e} (tol 1e-10)"),
    ))
}

fn random_rank3_zeta(rng: &mut ChaCha8Rng, n: usize, t: usize) -> Mat<f64> {
    let b = Mat::from_fn(n, 3, |_, _| rng.random::<f64>() - 0.5);
    let s = 1.0 / t as f64;
    Mat::from_fn(n, n, |i, j| {
        s * (0..3).map(|k| b[(i, k)] * b[(j, k)]).sum::<f64>() * n as f64
    })
}

fn reduction_lattice() -> Result<Outcome> {
    let (n, t, sigma2) = (32, 64, 1.0);
    let kappa = n as f64 / t as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xi_eigs: Vec<f64> = (0..n).map(|_| 0.5 + 1.5 * rng.random::<f64>()).collect();
    let xi = Mat::from_fn(n, n, |i, j| if i == j { xi_eigs[i] } else { 0.0 });
    let zeta = random_rank3_zeta(&mut rng, n, t);
    let zeta_eigs = sym_eigen(&zeta)?.eigenvalues;
    let zeros = vec![0.0; n];
    let cfg = SolverConfig::default();
    let grid = uniform_grid(0.05, 8.0, 50);
    let mp = MpParams::new(sigma2, kappa);

    let (mut d1, mut d2, mut d3): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for &l in &grid {
        let z = Complex64::new(l, 1e-6);
        let a = solve_pastur_nccwe(z, &Mat::identity(n, n), &zeta, sigma2, kappa, &cfg, None)?;
        let b = solve_pastur_ncwe(z, &zeta_eigs, sigma2, kappa, &cfg, None)?;
        d1 = d1.max((a.g - b.g).norm());
        let a = solve_pastur_nccwe(z, &xi, &Mat::zeros(n, n), sigma2, kappa, &cfg, None)?;
        let b = solve_pastur_cwe(z, &xi_eigs, sigma2, kappa, &cfg, None)?;
        d2 = d2.max((a.g - b.g).norm());
        let a = solve_pastur_ncwe(z, &zeros, sigma2, kappa, &cfg, None)?;
        d3 = d3.max((a.g - mp_resolvent(z, mp)).norm());
    }
    let worst = d1.max(d2).max(d3);
    Ok(Outcome::new(
        worst < 1e-10,
        format!("nccwe(I)-ncwe {d1:.2e}, nccwe(zeta=0)-cwe {d2:.2e}, ncwe(0)-MP {d3:.2e} (tol 1e-10)"),
    ))
}

/// Plain damped fixed-point iteration of the commuting equations.
fn commuting_oracle(z: Complex64, xi: &[f64], zeta: &[f64], sigma2: f64, kappa: f64) -> (Complex64, Complex64) {
    let n = xi.len() as f64;
    let mut g = 1.0 / z;
    let mut h = xi.iter().sum::<f64>() / n / z;
    for _ in 0..200_000 {
        let a1 = sigma2 * (1.0 - kappa + kappa * z * g);
        let a2 = 1.0 / (1.0 - sigma2 * kappa * h);
        let (mut gn, mut hn) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        for (x, s) in xi.iter().zip(zeta) {
            let r = 1.0 / (z - a1 * x - a2 * s);
            gn += r;
            hn += x * r;
        }
        gn /= n;
        hn /= n;
        let step = (gn - g).norm() + (hn - h).norm();
        g = 0.5 * (g + gn);
        h = 0.5 * (h + hn);
        if step < 1e-15 {
            break;
        }
    }
    (g, h)
}

fn commuting_oracle_check() -> Result<Outcome> {
    let (n, sigma2, kappa) = (8, 0.8, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xi: Vec<f64> = (0..n).map(|_| 0.5 + 1.5 * rng.random::<f64>()).collect();
    let zeta: Vec<f64> = (0..n)
        .map(|i| if i < 2 { 0.3 + rng.random::<f64>() } else { 0.0 })
        .collect();
    let q = sym_eigen(&Mat::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5))?.eigenvectors;
    let rotate = |d: &[f64]| {
        let dm = Mat::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 });
        &q * dm * q.transpose()
    };
    let (xm, zm) = (rotate(&xi), rotate(&zeta));
    let dense = CoupledSystem::new(&xm, &zm, sigma2, kappa)?.dense_only();
    let cfg = SolverConfig::default();
    let mut worst: f64 = 0.0;
    for l in uniform_grid(0.05, 5.0, 20) {
        let z = Complex64::new(l, 1e-3);
        let (g, h) = commuting_oracle(z, &xi, &zeta, sigma2, kappa);
        let a = solve_pastur_nccwe(z, &xm, &zm, sigma2, kappa, &cfg, None)?;
        let b = dense.solve(z, &cfg, None)?;
        for s in [a, b] {
            worst = worst.max((s.g - g).norm()).max((s.g_xi - h).norm());
        }
    }
    Ok(Outcome::new(
        worst < 1e-8,
        format!("max |d(g, g_xi)| = {worst:.2e} at Im z = 1e-3 (tol 1e-8)"),
    ))
}

fn aligned_curves(a: &PreparedEnsemble, b: &PreparedEnsemble, points: usize) -> Result<(DensityCurve, DensityCurve)> {
    let top = a.support_upper_bound().max(b.support_upper_bound());
    let grid = uniform_grid(1e-3 * top, top, points);
    let cfg = SolverConfig::default();
    Ok((a.curve(&grid, &cfg)?, b.curve(&grid, &cfg)?))
}

fn prepared(spec: &EnsembleSpec) -> Result<PreparedEnsemble> {
    PreparedEnsemble::new(spec, Variant::resolve(spec))
}

fn fig1() -> Result<Outcome> {
    let n = 512;
    let cfg = SolverConfig::default();
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, mu) in [0.0, 1.0, 3.0].into_iter().enumerate() {
        let spec = build_fig1_model(n, mu)?;
        let prep = prepared(&spec)?;
        let preds = predict_outliers(&spec, prep.variant())?;
        let c = run_comparison(&prep, &spec, &preds, &cfg, &mc(100 + i as u64))?;
        pass &= c.report.sup_distance < 0.05;
        parts.push(format!("mu={mu}: sup {:.4}", c.report.sup_distance));
    }
    let (a, b) = aligned_curves(
        &prepared(&build_fig1_model(n, 3.0)?)?,
        &prepared(&build_fig1_model(n, 0.0)?)?,
        2000,
    )?;
    let shift = max_abs_diff(&a.rho, &b.rho);
    pass &= shift > 0.1;
    parts.push(format!("mu=3 vs mu=0 sup {shift:.4} (> 0.1)"));
    Ok(Outcome::new(pass, format!("{} (tol 0.05)", parts.join(", "))))
}

fn fig2() -> Result<Outcome> {
    let n = 512;
    let cfg = SolverConfig::default();
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, mu0) in [0.1, 0.3, 0.5].into_iter().enumerate() {
        let spec = build_fig2_model(n, mu0, 0.5)?;
        let prep = prepared(&spec)?;
        let preds = predict_outliers(&spec, prep.variant()).unwrap_or_default();
        let mc_cfg = McConfig {
            points_per_bin: 2,
            ..mc(200 + i as u64)
        };
        let c = run_comparison(&prep, &spec, &preds, &cfg, &mc_cfg)?;
        let zero_mean = prepared(&build_fig2_model(n, mu0, 0.0)?)?.curve(&c.theory.grid, &cfg)?;
        let shift = max_abs_diff(&c.theory.rho, &zero_mean.rho);
        pass &= c.report.kolmogorov < 0.05 && shift > 0.05;
        parts.push(format!(
            "mu0={mu0}: KS {:.4}, mu=0.5 vs mu=0 sup {shift:.4}",
            c.report.kolmogorov
        ));
    }
    Ok(Outcome::new(
        pass,
        format!("{} (KS < 0.05, shift > 0.05)", parts.join("; ")),
    ))
}

fn outlier_checks() -> Result<Outcome> {
    let edge = Some(f64::MAX);
    let cases = [
        (
            "equal-cross CWE",
            build_equal_cross_model(256, 512, 1.0, 0.1, 0.0)?,
            outlier_cwe_equal_cross(256, 0.1, 1.0, 0.5),
        ),
        (
            "rank-1 nc-WE",
            build_equal_cross_model(512, 1024, 1.0, 0.0, 10.0 / 512.0)?,
            outlier_ncwe_rank1(512, 10.0 / 512.0, 1.0, 0.5),
        ),
        (
            "nc-CWE",
            build_equal_cross_model(512, 1024, 1.0, 0.05, 0.02)?,
            outlier_nccwe_equal_cross_rank1(512, 0.05, 0.02, 1.0, 0.5),
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (name, spec, pred)) in cases.into_iter().enumerate() {
        let s = sample_wishart(
            &spec,
            &McConfig {
                classification_edge: edge,
                ..mc(300 + i as u64)
            },
        )?;
        let rel = (s.mean_largest - pred.lambda_bar) / pred.lambda_bar;
        pass &= pred.valid && rel.abs() < 0.02;
        parts.push(format!(
            "{name}: MC {:.3} vs {:.3} ({:+.2}%)",
            s.mean_largest,
            pred.lambda_bar,
            100.0 * rel
        ));
    }
    Ok(Outcome::new(pass, format!("{} (tol 2%)", parts.join("; "))))
}

fn coincidence() -> Result<Outcome> {
    let n = 1024;
    let (t, kappa) = (2048, 0.5);
    let mut worst: f64 = 0.0;
    for n_mu_sq in [2.0, 5.0, 10.0, 50.0] {
        let mu_sq = n_mu_sq / n as f64;
        let a = outlier_ncwe_rank1(n, mu_sq, 1.0, kappa);
        let b = outlier_cwe_equal_cross(n, mu_sq, 1.0, kappa);
        worst = worst.max(((a.lambda_bar - b.lambda_bar) / b.lambda_bar).abs());

        let cwe = build_equal_cross_model(n, t, 1.0, mu_sq, 0.0)?;
        let g = outlier_cwe_general(&sym_eigen(&cwe.xi)?, n, 1.0, kappa)?;
        let nc = build_equal_cross_model(n, t, 1.0, 0.0, mu_sq)?;
        let zeta = ncwishart::ensemble::derive_matrices(&nc)?.zeta;
        let h = outlier_ncwe(&sym_eigen(&zeta)?, n, 1.0, kappa)?;
        worst = worst.max(((g.lambda_bar - h.lambda_bar) / g.lambda_bar).abs());
    }
    let tol = 2.0 / n as f64;
    Ok(Outcome::new(
        worst < tol,
        format!("max relative difference {worst:.2e} (tol 2/N = {tol:.2e})"),
    ))
}

fn beta_independence() -> Result<Outcome> {
    let spec = build_fig1_model(512, 1.0)?;
    let prep = prepared(&spec)?;
    let cfg = SolverConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, beta) in [Beta::Real, Beta::Complex].into_iter().enumerate() {
        let sampled = spec.clone().with_beta(beta);
        let c = run_comparison(&prep, &sampled, &[], &cfg, &mc(400 + i as u64))?;
        pass &= c.report.sup_distance < 0.05;
        parts.push(format!("beta={}: sup {:.4}", beta.value(), c.report.sup_distance));
    }
    Ok(Outcome::new(pass, format!("{} (tol 0.05)", parts.join(", "))))
}

fn cosine_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| lo + 0.5 * (hi - lo) * (1.0 - (PI * i as f64 / (points - 1) as f64).cos()))
        .collect()
}

fn sum_rules() -> Result<Outcome> {
    let n = 128;
    let models: Vec<(String, EnsembleSpec)> = vec![
        ("identity".into(), build_identity_model(n, 2 * n, 1.0)?),
        ("fig1 mu=0".into(), build_fig1_model(n, 0.0)?),
        ("fig1 mu=1".into(), build_fig1_model(n, 1.0)?),
        ("fig1 mu=3".into(), build_fig1_model(n, 3.0)?),
        ("fig2 mu0=0.1".into(), build_fig2_model(n, 0.1, 0.5)?),
        ("fig2 mu0=0.3".into(), build_fig2_model(n, 0.3, 0.5)?),
        ("fig2 mu0=0.5".into(), build_fig2_model(n, 0.5, 0.5)?),
        (
            "equal-cross cwe".into(),
            build_equal_cross_model(n, 2 * n, 1.0, 0.1, 0.0)?,
        ),
        (
            "equal-cross ncwe".into(),
            build_equal_cross_model(n, 2 * n, 1.0, 0.0, 0.1)?,
        ),
        (
            "equal-cross nccwe".into(),
            build_equal_cross_model(n, 2 * n, 1.0, 0.05, 0.02)?,
        ),
    ];
    let cfg = SolverConfig::default();
    let mut pass = true;
    let (mut worst_mass, mut worst_moment): (f64, f64) = (0.0, 0.0);
    let mut notes = Vec::new();
    for (name, spec) in &models {
        let prep = prepared(spec)?;
        let thr = bulk_mass_threshold(n);
        let comps = prep.support_components(&cfg, 400, 64)?;
        // without an analytic prediction the separated components stand in
        let preds: Vec<f64> = match predict_outliers(spec, prep.variant()) {
            Ok(p) => p.into_iter().filter(|p| p.valid).map(|p| p.lambda_bar).collect(),
            Err(Error::NonCommuting { .. }) => comps
                .iter()
                .filter(|c| c.mass <= thr)
                .map(|c| 0.5 * (c.lo + c.hi))
                .collect(),
            Err(e) => return Err(e),
        };
        let (mut mass, mut moment) = (0.0, 0.0);
        for c in comps.iter().filter(|c| c.mass > thr) {
            let curve = prep.curve(&cosine_grid(c.lo, c.hi, 2001), &cfg)?;
            if curve.failures() > 0 {
                pass = false;
                notes.push(format!("{name}: {} unconverged points", curve.failures()));
            }
            mass += curve.integrate(c.lo, c.hi, |_| 1.0);
            moment += curve.integrate(c.lo, c.hi, |l| l);
        }
        let expected_mass = (n - preds.len()) as f64 / n as f64;
        let total_moment = moment + preds.iter().sum::<f64>() / n as f64;
        let want = prep.first_moment();
        let dm = (mass - expected_mass).abs();
        let dmom = ((total_moment - want) / want).abs();
        worst_mass = worst_mass.max(dm);
        worst_moment = worst_moment.max(dmom);
        if dm >= 5e-3 || dmom >= 1e-2 {
            pass = false;
            notes.push(format!(
                "{name}: mass {mass:.5} vs {expected_mass:.5}, moment {total_moment:.5} vs {want:.5}"
            ));
        }
    }
    let mut detail = format!(
        "{} models, worst mass error {worst_mass:.2e} (tol 5e-3), worst moment error {worst_moment:.2e} (tol 1e-2)",
        models.len()
    );
    for note in notes {
        detail.push_str("; ");
        detail.push_str(&note);
    }
    Ok(Outcome::new(pass, detail))
}

fn jacobian_check() -> Result<Outcome> {
    let n = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let xi = {
        let a = Mat::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        Mat::from_fn(n, n, |i, j| {
            (&a * a.transpose())[(i, j)] / n as f64 + if i == j { 0.5 } else { 0.0 }
        })
    };
    let zeta = random_rank3_zeta(&mut rng, n, 2 * n);
    let sys = CoupledSystem::new(&xi, &zeta, 0.7, 0.5)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let z = Complex64::new(0.1 + 3.0 * rng.random::<f64>(), 0.05 + rng.random::<f64>());
        let g = Complex64::new(rng.random::<f64>(), -0.05 - rng.random::<f64>());
        let h = Complex64::new(rng.random::<f64>(), -0.05 - rng.random::<f64>());
        let (_, ja) = sys.evaluate(z, g, h)?;
        let jf = sys.finite_difference_jacobian(z, g, h, 1e-7)?;
        let (mut num, mut den) = (0.0, 0.0);
        for r in 0..2 {
            for c in 0..2 {
                num += (ja[r][c] - jf[r][c]).norm_sqr();
                den += ja[r][c].norm_sqr();
            }
        }
        worst = worst.max((num / den).sqrt());
    }
    Ok(Outcome::new(
        worst < 1e-5,
        format!("max relative difference {worst:.2e} over 20 states (tol 1e-5)"),
    ))
}

type Criterion = (&'static str, fn() -> Result<Outcome>);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("MP reduction", mp_reduction),
        ("reduction lattice", reduction_lattice),
        ("commuting-case oracle", commuting_oracle_check),
        ("fig1 builder vs Monte-Carlo", fig1),
        ("fig2 builder vs Monte-Carlo", fig2),
        ("outlier positions", outlier_checks),
        ("CWE / nc-WE coincidence", coincidence),
        ("beta independence", beta_independence),
        ("sum rules", sum_rules),
        ("Jacobian cross-check", jacobian_check),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} [{verdict}] {name}: {} [{:.1}s]",
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    }
}
