//! Seeded sampling of `W = (xi^{1/2} A + B)(xi^{1/2} A + B)^dagger / T` for
//! beta = 1, 2, histogramming, and theory-versus-simulation metrics.

use faer::{Mat, Side};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{derive_matrices, Beta, EnsembleSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};
use crate::outliers::OutlierPrediction;
use crate::pastur::{DensityCurve, PreparedEnsemble, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub trials: usize,
    pub seed: u64,
    pub bins: usize,
    /// Padding above the classification edge, in units of bulk bin widths.
    pub bulk_edge_pad: f64,
    /// Bulk edge used to classify outliers; when absent the edge of a
    /// single zero-mean reference trial is used.
    pub classification_edge: Option<f64>,
    /// Theory points per histogram bin in comparisons.
    pub points_per_bin: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            trials: 20,
            seed: 0,
            bins: 100,
            bulk_edge_pad: 3.0,
            classification_edge: None,
            points_per_bin: 8,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.trials < 1 {
            return Err("mc.trials must be >= 1".into());
        }
        if self.bins < 2 {
            return Err("mc.bins must be >= 2".into());
        }
        if self.points_per_bin < 1 {
            return Err("mc.points_per_bin must be >= 1".into());
        }
        if !(self.bulk_edge_pad >= 0.0) {
            return Err("mc.bulk_edge_pad must be non-negative".into());
        }
        if let Some(e) = self.classification_edge {
            if !(e > 0.0 && e.is_finite()) {
                return Err("mc.classification_edge must be positive".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSpectrum {
    pub n: usize,
    pub seed: u64,
    pub beta: Beta,
    /// Ascending eigenvalues of each successful trial.
    pub eigenvalues: Vec<Vec<f64>>,
    pub bin_edges: Vec<f64>,
    /// Histogram of the bulk eigenvalues, integrating to one.
    pub density: Vec<f64>,
    /// Share of all eigenvalues that fall in the bulk histogram.
    pub bulk_fraction: f64,
    /// Eigenvalues above this value are outliers.
    pub outlier_threshold: f64,
    /// Outliers of each trial, descending.
    pub outliers: Vec<Vec<f64>>,
    pub mean_largest: f64,
    pub failed_trials: Vec<usize>,
}

impl McSpectrum {
    pub fn pooled(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.eigenvalues.iter().flatten().copied().collect();
        all.sort_by(f64::total_cmp);
        all
    }

    pub fn bin_width(&self) -> f64 {
        if self.bin_edges.len() < 2 {
            0.0
        } else {
            self.bin_edges[1] - self.bin_edges[0]
        }
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Mean over trials of the `rank`-th largest eigenvalue (rank 1 = largest).
    pub fn mean_of_rank(&self, rank: usize) -> f64 {
        let vals: Vec<f64> = self
            .eigenvalues
            .iter()
            .filter(|e| e.len() >= rank && rank > 0)
            .map(|e| e[e.len() - rank])
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    /// Mean of `<W>_N = tr(W)/N` over trials and its standard error.
    pub fn mean_trace(&self) -> (f64, f64) {
        let traces: Vec<f64> = self
            .eigenvalues
            .iter()
            .map(|e| e.iter().sum::<f64>() / e.len() as f64)
            .collect();
        let m = traces.len() as f64;
        let mean = traces.iter().sum::<f64>() / m;
        let var = traces.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        (mean, (var / m).sqrt())
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    let x: f64 = StandardNormal.sample(rng);
    sd * x
}

/// Column-major fill, so the stream order is fixed.
fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sd: f64) -> Mat<f64> {
    let mut m = Mat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = normal(rng, sd);
        }
    }
    m
}

struct Sampler<'a> {
    spec: &'a EnsembleSpec,
    xi_sqrt: Option<Mat<f64>>,
}

impl Sampler<'_> {
    fn trial(&self, seed: u64, trial: usize) -> Result<Vec<f64>> {
        let mut rng = trial_rng(seed, trial);
        let (n, t, s2) = (self.spec.n, self.spec.t, self.spec.sigma2);
        let inv_t = 1.0 / t as f64;
        match self.spec.beta {
            Beta::Real => {
                let a = gaussian_matrix(&mut rng, n, t, s2.sqrt());
                let mixed = match &self.xi_sqrt {
                    Some(r) => r * &a,
                    None => a,
                };
                let x = mixed + &self.spec.b;
                let w = &x * x.transpose();
                let w = Mat::from_fn(n, n, |i, j| 0.5 * (w[(i, j)] + w[(j, i)]) * inv_t);
                real_eigenvalues(&w)
            }
            Beta::Complex => {
                let sd = (s2 / 2.0).sqrt();
                let re = gaussian_matrix(&mut rng, n, t, sd);
                let im = gaussian_matrix(&mut rng, n, t, sd);
                let (re, im) = match &self.xi_sqrt {
                    Some(r) => (r * &re, r * &im),
                    None => (re, im),
                };
                let x: ComplexMatrix = Mat::from_fn(n, t, |i, j| {
                    Complex64::new(re[(i, j)] + self.spec.b[(i, j)], im[(i, j)])
                });
                let w = &x * x.adjoint();
                let w = Mat::from_fn(n, n, |i, j| 0.5 * (w[(i, j)] + w[(j, i)].conj()) * inv_t);
                complex_eigenvalues(&w)
            }
        }
    }
}

fn real_eigenvalues(w: &Mat<f64>) -> Result<Vec<f64>> {
    linalg::sym_eigenvalues(w).or_else(|_| {
        w.self_adjoint_eigenvalues(Side::Upper)
            .map_err(|_| Error::EigenNoConvergence)
    })
}

fn complex_eigenvalues(w: &ComplexMatrix) -> Result<Vec<f64>> {
    linalg::hermitian_eigenvalues(w).or_else(|_| {
        w.self_adjoint_eigenvalues(Side::Upper)
            .map_err(|_| Error::EigenNoConvergence)
    })
}

fn sample_trials(spec: &EnsembleSpec, seed: u64, trials: usize) -> Result<Vec<Result<Vec<f64>>>> {
    let xi_sqrt = if spec.xi_is_identity() {
        None
    } else {
        Some(derive_matrices(spec)?.xi_sqrt)
    };
    let sampler = Sampler { spec, xi_sqrt };
    Ok((0..trials).into_par_iter().map(|k| sampler.trial(seed, k)).collect())
}

/// Samples `cfg.trials` independent matrices. Trial `k` draws from the
/// ChaCha stream `(seed, k)`, so results do not depend on scheduling.
pub fn sample_wishart(spec: &EnsembleSpec, cfg: &McConfig) -> Result<McSpectrum> {
    cfg.validate().map_err(Error::Config)?;
    let results = sample_trials(spec, cfg.seed, cfg.trials)?;
    let mut eigenvalues = Vec::with_capacity(cfg.trials);
    let mut failed_trials = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(e) => eigenvalues.push(e),
            Err(_) => failed_trials.push(k),
        }
    }
    if eigenvalues.is_empty() {
        return Err(Error::EigenNoConvergence);
    }

    let edge = match cfg.classification_edge {
        Some(e) => e,
        None => reference_edge(spec, cfg.seed)?,
    };
    let threshold = edge * (1.0 + cfg.bulk_edge_pad * 1.02 / cfg.bins as f64);

    let mut bulk: Vec<f64> = Vec::new();
    let mut outliers = Vec::with_capacity(eigenvalues.len());
    for e in &eigenvalues {
        let mut out: Vec<f64> = e.iter().copied().filter(|&v| v > threshold).collect();
        out.reverse();
        outliers.push(out);
        bulk.extend(e.iter().copied().filter(|&v| v <= threshold));
    }
    let total: usize = eigenvalues.iter().map(|e| e.len()).sum();
    let (bin_edges, density) = histogram(&bulk, cfg.bins);
    let mean_largest = eigenvalues.iter().map(|e| e[e.len() - 1]).sum::<f64>() / eigenvalues.len() as f64;
    Ok(McSpectrum {
        n: spec.n,
        seed: cfg.seed,
        beta: spec.beta,
        eigenvalues,
        bin_edges,
        density,
        bulk_fraction: bulk.len() as f64 / total as f64,
        outlier_threshold: threshold,
        outliers,
        mean_largest,
        failed_trials,
    })
}

/// Largest eigenvalue of one trial of the same ensemble with `B = 0`.
fn reference_edge(spec: &EnsembleSpec, seed: u64) -> Result<f64> {
    let mut reference = spec.clone();
    reference.b = Mat::zeros(spec.n, spec.t);
    let r = sample_trials(&reference, seed ^ 0x5eed_0fb0, 1)?;
    let e = r.into_iter().next().ok_or(Error::EigenNoConvergence)??;
    Ok(e[e.len() - 1])
}

/// Uniform bins on `[0, max * 1.02]`, normalized to unit integral.
pub fn histogram(values: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>) {
    if values.is_empty() || bins == 0 {
        return (Vec::new(), Vec::new());
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let top = if max > 0.0 { max * 1.02 } else { 1.0 };
    let width = top / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = ((v.max(0.0) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let edges = (0..=bins).map(|i| i as f64 * width).collect();
    let norm = 1.0 / (values.len() as f64 * width);
    (edges, counts.iter().map(|&c| c as f64 * norm).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierComparison {
    pub k: usize,
    pub predicted: f64,
    pub empirical_mean: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Largest `|bulk_fraction * histogram - bin-averaged theory|` over bins.
    pub sup_distance: f64,
    /// Same, with the theory read off at bin centres.
    pub sup_distance_centers: f64,
    /// Largest gap between the empirical CDF of all eigenvalues and the
    /// cumulative theory density.
    pub kolmogorov: f64,
    pub theory_mass: f64,
    pub outliers: Vec<OutlierComparison>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub sup: Option<f64>,
    pub kolmogorov: Option<f64>,
    pub outlier_rel: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            sup: Some(0.05),
            kolmogorov: Some(0.05),
            outlier_rel: Some(0.02),
        }
    }
}

impl ComparisonReport {
    /// Names of the configured thresholds that fail.
    pub fn failures(&self, t: &Thresholds) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(s) = t.sup {
            if !(self.sup_distance < s) {
                out.push(format!("sup distance {:.4} >= {s}", self.sup_distance));
            }
        }
        if let Some(k) = t.kolmogorov {
            if !(self.kolmogorov < k) {
                out.push(format!("kolmogorov {:.4} >= {k}", self.kolmogorov));
            }
        }
        if let Some(r) = t.outlier_rel {
            for o in &self.outliers {
                if !(o.relative_error.abs() < r) {
                    out.push(format!(
                        "outlier k={} relative error {:.4} >= {r}",
                        o.k, o.relative_error
                    ));
                }
            }
        }
        out
    }
}

/// Cumulative trapezoid of `curve`, as `(grid, F)`.
fn cumulative(curve: &DensityCurve) -> Vec<f64> {
    let mut f = Vec::with_capacity(curve.grid.len());
    let mut acc = 0.0;
    f.push(0.0);
    for i in 1..curve.grid.len() {
        acc += 0.5 * (curve.grid[i] - curve.grid[i - 1]) * (curve.rho[i] + curve.rho[i - 1]);
        f.push(acc);
    }
    f
}

fn interp_cdf(grid: &[f64], f: &[f64], x: f64) -> f64 {
    if x <= grid[0] {
        return 0.0;
    }
    if x >= grid[grid.len() - 1] {
        return f[f.len() - 1];
    }
    let i = grid.partition_point(|&g| g < x);
    let t = (x - grid[i - 1]) / (grid[i] - grid[i - 1]);
    f[i - 1] * (1.0 - t) + f[i] * t
}

/// Compares a theory curve with a sampled spectrum. Valid predictions are
/// matched, largest first, with the mean of the correspondingly ranked
/// sampled eigenvalue.
pub fn compare_curves(
    theory: &DensityCurve,
    mc: &McSpectrum,
    predictions: &[OutlierPrediction],
) -> Result<ComparisonReport> {
    let pooled = mc.pooled();
    if pooled.is_empty() || mc.density.is_empty() || theory.grid.len() < 2 {
        return Err(Error::EmptyOverlap);
    }
    let (g0, g1) = (theory.grid[0], theory.grid[theory.grid.len() - 1]);
    let (h0, h1) = (mc.bin_edges[0], mc.bin_edges[mc.bin_edges.len() - 1]);
    if g1 <= h0 || g0 >= h1 {
        return Err(Error::EmptyOverlap);
    }
    let f = cumulative(theory);
    let w = mc.bin_width();
    let mut sup: f64 = 0.0;
    let mut sup_c: f64 = 0.0;
    for (i, c) in mc.bin_centers().iter().enumerate() {
        let (a, b) = (mc.bin_edges[i], mc.bin_edges[i + 1]);
        let hist = mc.bulk_fraction * mc.density[i];
        let avg = (interp_cdf(&theory.grid, &f, b) - interp_cdf(&theory.grid, &f, a)) / w;
        sup = sup.max((hist - avg).abs());
        sup_c = sup_c.max((hist - theory.interpolate(*c)).abs());
    }

    let m = pooled.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &x) in pooled.iter().enumerate() {
        let ft = interp_cdf(&theory.grid, &f, x);
        ks = ks.max((i as f64 / m - ft).abs()).max(((i + 1) as f64 / m - ft).abs());
    }

    let mut valid: Vec<&OutlierPrediction> = predictions.iter().filter(|p| p.valid).collect();
    valid.sort_by(|a, b| b.lambda_bar.total_cmp(&a.lambda_bar));
    let outliers = valid
        .iter()
        .enumerate()
        .map(|(r, p)| {
            let emp = mc.mean_of_rank(r + 1);
            OutlierComparison {
                k: p.k,
                predicted: p.lambda_bar,
                empirical_mean: emp,
                relative_error: (emp - p.lambda_bar) / p.lambda_bar,
            }
        })
        .collect();

    Ok(ComparisonReport {
        sup_distance: sup,
        sup_distance_centers: sup_c,
        kolmogorov: ks,
        theory_mass: f[f.len() - 1],
        outliers,
    })
}

/// Grid with `sub` equal steps per histogram bin, aligned with the edges.
pub fn aligned_grid(mc: &McSpectrum, sub: usize) -> Vec<f64> {
    let (lo, hi) = (mc.bin_edges[0], mc.bin_edges[mc.bin_edges.len() - 1]);
    let m = (mc.bin_edges.len() - 1) * sub;
    (0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect()
}

/// Everything produced by [`run_comparison`].
#[derive(Debug, Clone)]
pub struct Comparison {
    pub bulk_edge: f64,
    pub mc: McSpectrum,
    pub theory: DensityCurve,
    pub report: ComparisonReport,
}

/// Theory bulk edge, then sampling with that classification edge, then the
/// theory curve on a grid aligned with the histogram, then the metrics.
/// `theory` and `sampled` may differ (negative controls).
pub fn run_comparison(
    theory: &PreparedEnsemble,
    sampled: &EnsembleSpec,
    predictions: &[OutlierPrediction],
    solver: &SolverConfig,
    mc_cfg: &McConfig,
) -> Result<Comparison> {
    let bulk_edge = theory.bulk_upper_edge(solver)?;
    let cfg = McConfig {
        classification_edge: Some(bulk_edge),
        ..mc_cfg.clone()
    };
    let mc = sample_wishart(sampled, &cfg)?;
    let curve = theory.curve(&aligned_grid(&mc, mc_cfg.points_per_bin), solver)?;
    let report = compare_curves(&curve, &mc, predictions)?;
    Ok(Comparison {
        bulk_edge,
        mc,
        theory: curve,
        report,
    })
}

/// Fig. 1 setting: `xi = I`, `B_jv = delta_jv mu sqrt(j)` (1-based `j`),
/// `T = 2N`, `sigma^2 = 1`.
pub fn build_fig1_model(n: usize, mu: f64) -> Result<EnsembleSpec> {
    let t = 2 * n;
    let b = Mat::from_fn(n, t, |j, v| if j == v { mu * ((j + 1) as f64).sqrt() } else { 0.0 });
    EnsembleSpec::new(n, t, 1.0, Beta::Real, Mat::identity(n, n), b)
}

/// Fig. 2 setting: `xi_jk = delta_jk + (1 - delta_jk) mu0^|j-k|`,
/// `B_jv = mu^|j-v|` for all `1 <= v <= T` (with `0^0 = 1`), `T = 2N`,
/// `sigma^2 = 0.25`.
pub fn build_fig2_model(n: usize, mu0: f64, mu: f64) -> Result<EnsembleSpec> {
    if !(mu0.abs() < 1.0 && mu.abs() < 1.0) {
        return Err(Error::Config(format!(
            "fig2 needs |mu0| < 1 and |mu| < 1, got {mu0}, {mu}"
        )));
    }
    let t = 2 * n;
    let xi = Mat::from_fn(n, n, |j, k| if j == k { 1.0 } else { mu0.powi(j.abs_diff(k) as i32) });
    let min = linalg::sym_eigenvalues(&xi)?[0];
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    let b = Mat::from_fn(n, t, |j, v| mu.powi(j.abs_diff(v) as i32));
    EnsembleSpec::new(n, t, 0.25, Beta::Real, xi, b)
}

/// Equal cross-correlation `xi` (off-diagonal `mu0^2`) with the rank-1
/// mean `B_jv = mu` (`mu = sqrt(mu_sq)`).
pub fn build_equal_cross_model(n: usize, t: usize, sigma2: f64, mu0_sq: f64, mu_sq: f64) -> Result<EnsembleSpec> {
    if !(0.0..1.0).contains(&mu0_sq) || !(mu_sq >= 0.0) {
        return Err(Error::Config(format!(
            "need 0 <= mu0^2 < 1 and mu^2 >= 0, got {mu0_sq}, {mu_sq}"
        )));
    }
    let xi = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { mu0_sq });
    let mu = mu_sq.sqrt();
    EnsembleSpec::new(n, t, sigma2, Beta::Real, xi, Mat::from_fn(n, t, |_, _| mu))
}

pub fn build_identity_model(n: usize, t: usize, sigma2: f64) -> Result<EnsembleSpec> {
    EnsembleSpec::identity(n, t, sigma2)
}
