//! Config-driven command line: `density`, `mc`, `outliers` and `compare`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure on more
//! than 10% of the points (or trials), 4 comparison threshold failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use faer::Mat;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ensemble::{Beta, EnsembleSpec};
use crate::error::Error;
use crate::montecarlo::{
    build_equal_cross_model, build_fig1_model, build_fig2_model, build_identity_model, run_comparison, sample_wishart,
    McConfig, McSpectrum, Thresholds,
};
use crate::outliers::{
    outlier_cwe_equal_cross, outlier_nccwe_equal_cross_rank1, outlier_ncwe_rank1, predict_outliers, OutlierPrediction,
};
use crate::pastur::{DensityCurve, PreparedEnsemble, SolverConfig, Variant};

/// Share of failed points (or trials) above which a run exits with code 3.
pub const FAILURE_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("threshold failure: {}", .0.join("; "))]
    Threshold(Vec<String>),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Threshold(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSpec(_)
            | Error::NotPositiveDefinite { .. }
            | Error::Unsupported(_)
            | Error::DimensionMismatch(_)
            | Error::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn one() -> f64 {
    1.0
}

fn real() -> Beta {
    Beta::Real
}

/// Where the ensemble comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleSource {
    Fig1 {
        n: usize,
        mu: f64,
        #[serde(default = "real")]
        beta: Beta,
    },
    Fig2 {
        n: usize,
        mu0: f64,
        mu: f64,
        #[serde(default = "real")]
        beta: Beta,
    },
    EqualCross {
        n: usize,
        t: usize,
        #[serde(default = "one")]
        sigma2: f64,
        mu0_sq: f64,
        #[serde(default)]
        mu_sq: f64,
        #[serde(default = "real")]
        beta: Beta,
    },
    Identity {
        n: usize,
        t: usize,
        #[serde(default = "one")]
        sigma2: f64,
        #[serde(default = "real")]
        beta: Beta,
    },
    /// Row-major nested arrays. `b` defaults to zero.
    Inline {
        t: usize,
        #[serde(default = "one")]
        sigma2: f64,
        #[serde(default = "real")]
        beta: Beta,
        xi: Vec<Vec<f64>>,
        #[serde(default)]
        b: Option<Vec<Vec<f64>>>,
    },
    /// Headerless row-major CSV files. `b` defaults to zero.
    Files {
        t: usize,
        #[serde(default = "one")]
        sigma2: f64,
        #[serde(default = "real")]
        beta: Beta,
        xi: PathBuf,
        #[serde(default)]
        b: Option<PathBuf>,
    },
}

impl EnsembleSource {
    pub fn build(&self) -> CliResult<EnsembleSpec> {
        let spec = match self {
            EnsembleSource::Fig1 { n, mu, beta } => build_fig1_model(*n, *mu)?.with_beta(*beta),
            EnsembleSource::Fig2 { n, mu0, mu, beta } => build_fig2_model(*n, *mu0, *mu)?.with_beta(*beta),
            EnsembleSource::EqualCross {
                n,
                t,
                sigma2,
                mu0_sq,
                mu_sq,
                beta,
            } => build_equal_cross_model(*n, *t, *sigma2, *mu0_sq, *mu_sq)?.with_beta(*beta),
            EnsembleSource::Identity { n, t, sigma2, beta } => build_identity_model(*n, *t, *sigma2)?.with_beta(*beta),
            EnsembleSource::Inline { t, sigma2, beta, xi, b } => {
                let xi = matrix_from_rows(xi, "xi")?;
                let b = match b {
                    Some(rows) => matrix_from_rows(rows, "b")?,
                    None => Mat::zeros(xi.nrows(), *t),
                };
                EnsembleSpec::new(xi.nrows(), *t, *sigma2, *beta, xi, b)?
            }
            EnsembleSource::Files { t, sigma2, beta, xi, b } => {
                let xi = read_matrix_csv(xi)?;
                let b = match b {
                    Some(p) => read_matrix_csv(p)?,
                    None => Mat::zeros(xi.nrows(), *t),
                };
                EnsembleSpec::new(xi.nrows(), *t, *sigma2, *beta, xi, b)?
            }
        };
        Ok(spec)
    }

    fn check_files(&self) -> CliResult<()> {
        if let EnsembleSource::Files { xi, b, .. } = self {
            for p in std::iter::once(xi).chain(b.iter()) {
                if !p.is_file() {
                    return Err(CliError::Config(format!("matrix file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> CliResult<Mat<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 {
        return Err(CliError::Config(format!("{name} is empty")));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(CliError::Config(format!(
            "{name} row {i} has {} entries, expected {c}",
            rows[i].len()
        )));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn read_matrix_csv(path: &Path) -> CliResult<Mat<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::Config(format!("{} line {}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    matrix_from_rows(&rows, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantChoice {
    #[default]
    Auto,
    Cwe,
    Ncwe,
    Nccwe,
}

impl VariantChoice {
    pub fn resolve(self, spec: &EnsembleSpec) -> Variant {
        match self {
            VariantChoice::Auto => Variant::resolve(spec),
            VariantChoice::Cwe => Variant::Cwe,
            VariantChoice::Ncwe => Variant::Ncwe,
            VariantChoice::Nccwe => Variant::Nccwe,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Range { min: f64, max: f64, points: usize },
    List(Vec<f64>),
}

impl GridSpec {
    pub fn points(&self) -> CliResult<Vec<f64>> {
        let grid = match self {
            GridSpec::Range { min, max, points } => {
                if !(min.is_finite() && max.is_finite() && min < max) {
                    return Err(CliError::Config(format!(
                        "grid needs min < max, got min={min}, max={max}"
                    )));
                }
                if *points < 2 {
                    return Err(CliError::Config("grid needs at least 2 points".into()));
                }
                (0..*points)
                    .map(|i| min + (max - min) * i as f64 / (*points - 1) as f64)
                    .collect()
            }
            GridSpec::List(v) => {
                if v.is_empty() {
                    return Err(CliError::Config("grid list is empty".into()));
                }
                if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(CliError::Config(
                        "grid list must be finite and strictly increasing".into(),
                    ));
                }
                v.clone()
            }
        };
        Ok(grid)
    }
}

/// One JSON document describing a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub ensemble: EnsembleSource,
    #[serde(default)]
    pub variant: VariantChoice,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub thresholds: Thresholds,
    /// Ensemble to sample in `compare` when it differs from the theory one.
    #[serde(default)]
    pub mc_ensemble: Option<EnsembleSource>,
    /// Artifact file names to write; empty means all of them.
    #[serde(default)]
    pub outputs: Vec<String>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.solver.validate().map_err(CliError::Config)?;
        if let Some(mc) = &self.mc {
            mc.validate().map_err(CliError::Config)?;
        }
        if let Some(g) = &self.grid {
            g.points()?;
        }
        self.ensemble.check_files()?;
        if let Some(e) = &self.mc_ensemble {
            e.check_files()?;
        }
        Ok(())
    }

    fn mc_config(&self, seed: Option<u64>) -> McConfig {
        let mut mc = self.mc.clone().unwrap_or_default();
        if let Some(s) = seed {
            mc.seed = s;
        }
        mc
    }
}

/// SHA-256 over dimensions, scale, Dyson index and every matrix entry.
pub fn spec_digest(spec: &EnsembleSpec) -> String {
    let mut h = Sha256::new();
    for v in [spec.n as u64, spec.t as u64, spec.beta.value() as u64] {
        h.update(v.to_le_bytes());
    }
    h.update(spec.sigma2.to_le_bytes());
    for m in [&spec.xi, &spec.b] {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                h.update(m[(i, j)].to_le_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Parser)]
#[command(
    name = "ncwishart",
    version,
    about = "Spectral densities and outliers of non-central correlated Wishart ensembles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Theory density on a grid
    Density(CommonArgs),
    /// Monte-Carlo eigenvalues and histogram
    Mc(CommonArgs),
    /// Separated-eigenvalue predictions
    Outliers(CommonArgs),
    /// Theory against Monte-Carlo, with pass/fail thresholds
    Compare(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration
    #[arg(short, long)]
    pub config: PathBuf,
    /// Overrides mc.seed
    #[arg(short, long)]
    pub seed: Option<u64>,
    #[arg(short, long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

type Handler = fn(&RunConfig, &CommonArgs, &mut Writer) -> CliResult<()>;

/// Runs a command and returns the files it wrote.
pub fn run(cmd: &Command) -> CliResult<Vec<PathBuf>> {
    let (args, f): (&CommonArgs, Handler) = match cmd {
        Command::Density(a) => (a, cmd_density),
        Command::Mc(a) => (a, cmd_mc),
        Command::Outliers(a) => (a, cmd_outliers),
        Command::Compare(a) => (a, cmd_compare),
    };
    let cfg = RunConfig::load(&args.config)?;
    let mut w = Writer::new(&args.out_dir, &cfg.outputs)?;
    let result = f(&cfg, args, &mut w);
    w.check_unused()?;
    result.map(|_| w.written)
}

struct Writer {
    dir: PathBuf,
    wanted: Vec<String>,
    offered: Vec<String>,
    written: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path, wanted: &[String]) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            wanted: wanted.to_vec(),
            offered: Vec::new(),
            written: Vec::new(),
        })
    }

    fn emit(&mut self, name: &str, bytes: impl FnOnce() -> CliResult<Vec<u8>>) -> CliResult<()> {
        self.offered.push(name.to_string());
        if !self.wanted.is_empty() && !self.wanted.iter().any(|w| w == name) {
            return Ok(());
        }
        let path = self.dir.join(name);
        fs::write(&path, bytes()?).map_err(io_err(&path))?;
        self.written.push(path);
        Ok(())
    }

    fn check_unused(&self) -> CliResult<()> {
        match self.wanted.iter().find(|w| !self.offered.contains(w)) {
            Some(w) => Err(CliError::Config(format!(
                "unknown output {w:?}; this command writes {:?}",
                self.offered
            ))),
            None => Ok(()),
        }
    }
}

fn csv_bytes<R: Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let e = |e: csv::Error| CliError::Solver(e.to_string());
    w.write_record(header).map_err(e)?;
    for r in rows {
        w.serialize(r).map_err(e)?;
    }
    w.into_inner().map_err(|e| CliError::Solver(e.to_string()))
}

fn json_bytes(v: &Value) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| CliError::Solver(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn metadata() -> Value {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({ "created_unix": secs, "version": env!("CARGO_PKG_VERSION") })
}

fn default_grid(prep: &PreparedEnsemble) -> Vec<f64> {
    let top = prep.support_upper_bound();
    let points = 1000;
    (1..=points).map(|i| top * i as f64 / points as f64).collect()
}

fn check_failures(what: &str, failed: usize, total: usize) -> CliResult<()> {
    if failed as f64 > FAILURE_FRACTION * total as f64 {
        Err(CliError::Solver(format!("{failed} of {total} {what} failed")))
    } else {
        Ok(())
    }
}

fn curve_stats(c: &DensityCurve) -> Value {
    let iters = &c.iterations;
    json!({
        "points": c.grid.len(),
        "failures": c.failures(),
        "max_iterations": iters.iter().max().copied().unwrap_or(0),
        "mean_iterations": iters.iter().sum::<usize>() as f64 / iters.len().max(1) as f64,
        "warnings": c.warnings,
    })
}

fn curve_csv(c: &DensityCurve) -> CliResult<Vec<u8>> {
    let rows = (0..c.grid.len()).map(|i| (c.grid[i], c.rho[i], c.converged[i], c.iterations[i]));
    csv_bytes(&["lambda", "rho", "converged", "iterations"], rows)
}

fn histogram_csv(mc: &McSpectrum) -> CliResult<Vec<u8>> {
    let rows = (0..mc.density.len()).map(|i| (mc.bin_edges[i], mc.bin_edges[i + 1], mc.density[i]));
    csv_bytes(&["bin_left", "bin_right", "density"], rows)
}

fn cmd_density(cfg: &RunConfig, _args: &CommonArgs, w: &mut Writer) -> CliResult<()> {
    let spec = cfg.ensemble.build()?;
    let variant = cfg.variant.resolve(&spec);
    let prep = PreparedEnsemble::new(&spec, variant)?;
    let grid = match &cfg.grid {
        Some(g) => g.points()?,
        None => default_grid(&prep),
    };
    if grid[0] < 0.0 || (grid[0] == 0.0 && spec.kappa() != 1.0) {
        return Err(CliError::Config(format!("grid must start above 0 (got {})", grid[0])));
    }
    let curve = prep.curve_parallel(&grid, &cfg.solver)?;
    w.emit("density.csv", || curve_csv(&curve))?;
    let sidecar = json!({
        "spec_digest": spec_digest(&spec),
        "variant": variant,
        "epsilon": curve.epsilon,
        "solver": curve_stats(&curve),
        "config": cfg,
        "metadata": metadata(),
    });
    w.emit("density.json", || json_bytes(&sidecar))?;
    check_failures("grid points", curve.failures(), grid.len())
}

fn cmd_mc(cfg: &RunConfig, args: &CommonArgs, w: &mut Writer) -> CliResult<()> {
    let spec = cfg.ensemble.build()?;
    let mc_cfg = cfg.mc_config(args.seed);
    mc_cfg.validate().map_err(CliError::Config)?;
    let mc = sample_wishart(&spec, &mc_cfg)?;
    w.emit("eigenvalues.csv", || {
        let rows = mc
            .eigenvalues
            .iter()
            .enumerate()
            .flat_map(|(t, e)| e.iter().enumerate().map(move |(i, v)| (t, i, *v)));
        csv_bytes(&["trial", "index", "eigenvalue"], rows)
    })?;
    w.emit("histogram.csv", || histogram_csv(&mc))?;
    let summary = json!({
        "spec_digest": spec_digest(&spec),
        "n": mc.n,
        "beta": mc.beta,
        "seed": mc.seed,
        "trials": mc_cfg.trials,
        "failed_trials": mc.failed_trials,
        "mean_largest": mc.mean_largest,
        "bulk_fraction": mc.bulk_fraction,
        "outlier_threshold": mc.outlier_threshold,
        "outliers": mc.outliers,
        "config": cfg,
        "metadata": metadata(),
    });
    w.emit("mc_summary.json", || json_bytes(&summary))?;
    check_failures("trials", mc.failed_trials.len(), mc_cfg.trials)
}

/// Exact finite-N line of the equal-cross builder.
fn equal_cross_prediction(src: &EnsembleSource, spec: &EnsembleSpec) -> Option<OutlierPrediction> {
    match *src {
        EnsembleSource::EqualCross {
            n,
            sigma2,
            mu0_sq,
            mu_sq,
            ..
        } => {
            let kappa = spec.kappa();
            Some(if mu_sq == 0.0 {
                outlier_cwe_equal_cross(n, mu0_sq, sigma2, kappa)
            } else if mu0_sq == 0.0 {
                outlier_ncwe_rank1(n, mu_sq, sigma2, kappa)
            } else {
                outlier_nccwe_equal_cross_rank1(n, mu0_sq, mu_sq, sigma2, kappa)
            })
        }
        _ => None,
    }
}

/// Analytic predictions, or the reason when none exist.
fn predictions(
    src: &EnsembleSource,
    spec: &EnsembleSpec,
    variant: Variant,
) -> CliResult<std::result::Result<Vec<OutlierPrediction>, String>> {
    if let Some(p) = equal_cross_prediction(src, spec) {
        return Ok(Ok(vec![p]));
    }
    match predict_outliers(spec, variant) {
        Ok(p) => Ok(Ok(p)),
        Err(e @ Error::NonCommuting { .. }) => Ok(Err(format!("no analytic prediction: {e}"))),
        Err(e) => Err(e.into()),
    }
}

fn cmd_outliers(cfg: &RunConfig, _args: &CommonArgs, w: &mut Writer) -> CliResult<()> {
    let spec = cfg.ensemble.build()?;
    let variant = cfg.variant.resolve(&spec);
    PreparedEnsemble::new(&spec, variant)?;
    let body = match predictions(&cfg.ensemble, &spec, variant)? {
        Ok(p) => json!({ "variant": variant, "spec_digest": spec_digest(&spec), "analytic": true, "predictions": p }),
        Err(reason) => json!({
            "variant": variant,
            "spec_digest": spec_digest(&spec),
            "analytic": false,
            "reason": reason,
            "predictions": [],
        }),
    };
    w.emit("outliers.json", || json_bytes(&body))
}

fn cmd_compare(cfg: &RunConfig, args: &CommonArgs, w: &mut Writer) -> CliResult<()> {
    let spec = cfg.ensemble.build()?;
    let sampled = match &cfg.mc_ensemble {
        Some(src) => src.build()?,
        None => spec.clone(),
    };
    if sampled.n != spec.n {
        return Err(CliError::Config(format!(
            "mc_ensemble has N={}, theory has N={}",
            sampled.n, spec.n
        )));
    }
    let variant = cfg.variant.resolve(&spec);
    let prep = PreparedEnsemble::new(&spec, variant)?;
    let preds = predictions(&cfg.ensemble, &spec, variant)?.unwrap_or_default();
    let mc_cfg = cfg.mc_config(args.seed);
    mc_cfg.validate().map_err(CliError::Config)?;
    let c = run_comparison(&prep, &sampled, &preds, &cfg.solver, &mc_cfg)?;

    w.emit("theory.csv", || curve_csv(&c.theory))?;
    w.emit("histogram.csv", || histogram_csv(&c.mc))?;
    w.emit("outliers.csv", || {
        let rows = c
            .report
            .outliers
            .iter()
            .map(|o| (o.k, o.predicted, o.empirical_mean, o.relative_error));
        csv_bytes(&["k", "predicted", "empirical_mean", "relative_error"], rows)
    })?;
    let failures = c.report.failures(&cfg.thresholds);
    let report = json!({
        "variant": variant,
        "spec_digest": spec_digest(&spec),
        "mc_spec_digest": spec_digest(&sampled),
        "bulk_edge": c.bulk_edge,
        "seed": mc_cfg.seed,
        "report": c.report,
        "thresholds": cfg.thresholds,
        "pass": failures.is_empty(),
        "failures": failures,
        "solver": curve_stats(&c.theory),
        "config": cfg,
        "metadata": metadata(),
    });
    w.emit("compare.json", || json_bytes(&report))?;
    check_failures("grid points", c.theory.failures(), c.theory.grid.len())?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Threshold(failures))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_builder_and_defaults() {
        let cfg = RunConfig::from_json(r#"{"ensemble": {"kind": "fig2", "n": 8, "mu0": 0.3, "mu": 0.5}}"#).unwrap();
        assert_eq!(cfg.variant, VariantChoice::Auto);
        assert_eq!(cfg.solver, SolverConfig::default());
        let spec = cfg.ensemble.build().unwrap();
        assert_eq!(cfg.variant.resolve(&spec), Variant::Nccwe);
    }

    #[test]
    fn grid_forms() {
        let g: GridSpec = serde_json::from_str(r#"{"min": 1, "max": 2, "points": 3}"#).unwrap();
        assert_eq!(g.points().unwrap(), vec![1.0, 1.5, 2.0]);
        let g: GridSpec = serde_json::from_str("[0.5, 1.0]").unwrap();
        assert_eq!(g.points().unwrap(), vec![0.5, 1.0]);
        let bad: GridSpec = serde_json::from_str(r#"{"min": 2, "max": 1, "points": 3}"#).unwrap();
        assert!(matches!(bad.points(), Err(CliError::Config(_))));
        assert!(GridSpec::List(vec![1.0, 1.0]).points().is_err());
    }

    #[test]
    fn inline_matrices() {
        let text = r#"{"ensemble": {"kind": "inline", "t": 4, "xi": [[1, 0.2], [0.2, 1]], "b": [[1, 0, 0, 0], [0, 0, 0, 0]]}}"#;
        let spec = RunConfig::from_json(text).unwrap().ensemble.build().unwrap();
        assert_eq!((spec.n, spec.t), (2, 4));
        assert_eq!(spec.b[(0, 0)], 1.0);
        let ragged = r#"{"ensemble": {"kind": "inline", "t": 4, "xi": [[1, 0.2], [0.2]]}}"#;
        let e = RunConfig::from_json(ragged).unwrap().ensemble.build().unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn missing_matrix_file_rejected_at_parse() {
        let text = r#"{"ensemble": {"kind": "files", "t": 4, "xi": "/nonexistent/xi.csv"}}"#;
        assert!(matches!(RunConfig::from_json(text), Err(CliError::Config(_))));
    }

    #[test]
    fn csv_matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "1, 0.5\n0.5, 2\n").unwrap();
        let m = read_matrix_csv(&p).unwrap();
        assert_eq!((m[(0, 1)], m[(1, 1)]), (0.5, 2.0));
        fs::write(&p, "1, x\n").unwrap();
        assert!(read_matrix_csv(&p).is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(RunConfig::from_json(r#"{"ensemble": {"kind": "identity", "n": 4, "t": 8}, "gird": []}"#).is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = EnsembleSpec::identity(4, 8, 1.0).unwrap();
        let b = EnsembleSpec::identity(4, 8, 1.0).unwrap().with_beta(Beta::Complex);
        assert_eq!(spec_digest(&a), spec_digest(&a.clone()));
        assert_ne!(spec_digest(&a), spec_digest(&b));
        assert_eq!(spec_digest(&a).len(), 64);
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(Error::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::EigenNoConvergence).exit_code(), 3);
        assert_eq!(CliError::Threshold(vec![]).exit_code(), 4);
    }

    #[test]
    fn failure_fraction() {
        assert!(check_failures("points", 10, 100).is_ok());
        assert!(matches!(check_failures("points", 11, 100), Err(CliError::Solver(_))));
    }
}
